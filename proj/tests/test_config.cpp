#include <gtest/gtest.h>

#include <fstream>

#include "abcnet/config.hpp"
#include "abcnet/error.hpp"
#include "test_util.hpp"

using namespace abc;
using namespace abc::cli;

namespace {

const char* kSmall = R"(# two blocks
seed = 3
preset = m3n3
epochs = 2
input = 1x8x8
classes = 4
[layer]
kind = conv
channels = 4
kernel = 3x3
padding = 1x1
[layer]
kind = batchnorm
[layer]
kind = activation
N = 5
[layer]
kind = conv
channels = 4
kernel = 3x3
M = 2
mode = channelwise
shifts_u = -0.5,0.5
[layer]
kind = flatten
[layer]
kind = dense
channels = 4
)";

}  // namespace

TEST(Config, ParsesAndResolvesPresets) {
  const RunConfig c = parse_config(kSmall);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.layers.size(), 6u);
  const ModelSpec s = c.model_spec();
  EXPECT_EQ(s.layers[0].bases, 3u);
  EXPECT_EQ(s.layers[0].shifts_u, (std::vector<float>{-1, 0, 1}));
  EXPECT_EQ(s.layers[2].branches, 5u);
  EXPECT_TRUE(s.layers[2].shifts_v.empty());  // default bank for N = 5
  EXPECT_EQ(s.layers[3].bases, 2u);
  EXPECT_EQ(s.layers[3].mode, approx::Mode::channelwise);
  EXPECT_EQ(s.layers[5].bases, kFullPrecision);  // classifier stays full precision
  s.validate();
}

TEST(Config, FirstLayerSwitchAndExplicitClassifierM) {
  RunConfig c = parse_config(kSmall);
  c.first_layer_fp = true;
  c.layers.back().M = 1;
  const ModelSpec s = c.model_spec();
  EXPECT_EQ(s.layers[0].bases, kFullPrecision);
  EXPECT_EQ(s.layers[5].bases, 1u);
}

TEST(Config, PresetsFromPublishedTable) {
  EXPECT_EQ(find_preset("m5n5").u, (std::vector<float>{-1, -0.5f, 0, 0.5f, 1}));
  EXPECT_EQ(find_preset("m5n5").v, (std::vector<float>{-3.5f, -2.5f, -1.5f, 0, 2.5f}));
  EXPECT_EQ(find_preset("m5n1").u, (std::vector<float>{-2, -1, 0, 1, 2}));
  EXPECT_EQ(find_preset("m3n3").v, (std::vector<float>{-1.5f, 0, 1.5f}));
  EXPECT_EQ(find_preset("fp").M, 0u);
  EXPECT_THROW(find_preset("m7n7"), ValueError);
}

TEST(Config, RoundTripIsIdentity) {
  const RunConfig a = parse_config(kSmall);
  const std::string text = serialize_config(a);
  const RunConfig b = parse_config(text);
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_config(b), text);

  RunConfig c = a;
  c.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal
  c.ridge = 3e-7;
  c.layers[2].betas = std::vector<float>{0.1f, 0.2f, 0.3f, 1.0f / 3.0f, 7.0f};
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, DeskConfigRoundTrips) {
  const RunConfig a = load_config(std::string(ABCNET_SOURCE_DIR) + "/configs/desk.cfg");
  EXPECT_EQ(parse_config(serialize_config(a)), a);
  a.validate();
}

TEST(Config, ParseErrorsCarryLineNumbers) {
  try {
    parse_config("seed = x\nbogus line\n[layer]\nkind = conv\nwat = 1\nchannels = -2\n");
    FAIL();
  } catch (const ValidationError& e) {
    ASSERT_EQ(e.problems().size(), 4u);
    EXPECT_EQ(e.problems()[0].rfind("line 1:", 0), 0u);
    EXPECT_EQ(e.problems()[1].rfind("line 2:", 0), 0u);
    EXPECT_EQ(e.problems()[2].rfind("line 5:", 0), 0u);
    EXPECT_EQ(e.problems()[3].rfind("line 6:", 0), 0u);
  }
}

TEST(Config, ValidateListsEveryViolation) {
  RunConfig c = parse_config(kSmall);
  c.learning_rate = -1;
  c.batch_size = 0;
  c.dataset = "idx:/no/such/images,/no/such/labels";
  c.init_from = "/no/such/model.abcm";
  c.layers[1].M = 3;        // batchnorm with M
  c.layers[0].channels = 0;  // invalid model
  try {
    c.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_GE(e.problems().size(), 7u) << e.what();
  }
}

TEST(Config, FormatShortest) {
  EXPECT_EQ(format_float(0.1f), "0.1");
  EXPECT_EQ(format_double(0.30000000000000004), "0.30000000000000004");
  EXPECT_EQ(format_float(-3.5f), "-3.5");
}
