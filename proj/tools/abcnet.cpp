// abcnet: approximate weights, train, evaluate, estimate costs and dump
// feature maps.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "abcnet/config.hpp"
#include "abcnet/cost.hpp"
#include "abcnet/data.hpp"
#include "abcnet/engine.hpp"
#include "abcnet/pgm.hpp"
#include "abcnet/train.hpp"

namespace fs = std::filesystem;
using namespace abc;

namespace {

// Validation sets draw from their own stream so that train and eval agree
// on the same samples for a given seed.
constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kValStream = 1;

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void write_text(const std::string& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<float> parse_list(const std::string& s) {
  std::vector<float> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    float v = 0.0f;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) throw ValueError("bad number '" + item + "' in list");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------- approx

struct ApproxArgs {
  std::string weights;
  std::size_t gaussian = 0;
  std::vector<std::size_t> Ms{1, 2, 3, 4, 5};
  std::string shifts;
  double ridge = approx::kDefaultRidge;
  std::string mode = "whole";
  std::string out;
  std::uint64_t seed = 1;
};

int cmd_approx(const ApproxArgs& a) {
  Tensor W;
  if (!a.weights.empty()) {
    W = load_tensor(a.weights);
  } else {
    Rng rng(a.seed);
    W = random_normal({a.gaussian}, rng);
  }
  const auto mode = a.mode == "channelwise" ? approx::Mode::channelwise : approx::Mode::whole;
  const auto custom = a.shifts.empty() ? std::vector<float>{} : parse_list(a.shifts);
  if (!custom.empty() && (a.Ms.size() != 1 || a.Ms.front() != custom.size()))
    throw ValueError("--shifts needs exactly one --M equal to its length");
  ensure_dir(a.out);

  std::string csv = "M,rmse\n";
  std::printf("%-4s %s\n", "M", "rmse");
  for (std::size_t M : a.Ms) {
    if (M == 0) throw ValueError("M must be >= 1");
    const auto shifts = custom.empty() ? approx::default_shifts(M) : custom;
    const auto bs = approx::approximate(W, mode, shifts, a.ridge);
    const auto recon = approx::reconstruct(bs);
    const double e = approx::rmse(W, recon);
    std::printf("%-4zu %.9g\n", M, e);
    csv += std::to_string(M) + "," + cli::format_double(e) + "\n";
    if (!a.out.empty()) save_tensor(join(a.out, "recon_M" + std::to_string(M) + ".abct"), recon);
  }
  if (!a.out.empty()) {
    write_text(join(a.out, "rmse.csv"), csv);
    save_tensor(join(a.out, "weights.abct"), W);
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::string preset, dataset, val_dataset, init;
  std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = cli::load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.preset.empty()) cfg.preset = a.preset;
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  if (!a.val_dataset.empty()) cfg.val_dataset = a.val_dataset;
  if (!a.init.empty()) cfg.init_from = a.init;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  ensure_dir(a.out);

  const auto spec = cfg.model_spec();
  auto tc = cfg.train_config();
  tc.divergence_dump = join(a.out, "diverged.abcm");
  const auto train = data::load_dataset(cfg.dataset, cfg.seed, kTrainStream);
  const auto val = data::load_dataset(cfg.val_dataset, cfg.seed, kValStream);

  train::Model model = [&] {
    if (cfg.init_from.empty()) return train::Model(spec, cfg.seed, cfg.ridge);
    auto fp = train::Model::load(cfg.init_from);
    return train::init_from_full_precision(fp, spec, cfg.ridge);
  }();

  write_text(join(a.out, "config.cfg"), cli::serialize_config(cfg));
  const auto log = train::train_epochs(model, train, val, tc, [](const train::EpochLog& e) {
    std::printf("epoch %zu lr %.6g loss %.6f train_acc %.4f val_acc %.4f\n", e.epoch, e.lr, e.train_loss,
                e.train_acc, e.val_acc);
    std::fflush(stdout);
  });
  write_text(join(a.out, "log.csv"), log.csv());
  model.save(join(a.out, "model.abcm"));
  std::printf("wrote %s and %s\n", join(a.out, "model.abcm").c_str(), join(a.out, "log.csv").c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, dataset, engine = "float", out;
  std::uint64_t seed = 1;
  std::size_t batch = 256;
};

int cmd_eval(const EvalArgs& a) {
  auto model = train::Model::load(a.checkpoint);
  const auto data = data::load_dataset(a.dataset, a.seed, kValStream);
  if (data.empty()) throw ValueError("dataset is empty");
  data.validate();
  if (data.sample_dims() != model.spec().input)
    throw ShapeError("checkpoint expects input " + shape_str(model.spec().input) + ", dataset has " +
                     shape_str(data.sample_dims()));
  if (data.classes > model.spec().classes)
    throw ShapeError("dataset has " + std::to_string(data.classes) + " classes, checkpoint " +
                     std::to_string(model.spec().classes));

  train::Accuracy acc;
  if (a.engine == "float") {
    acc = train::evaluate(model, data, a.batch);
  } else {
    const infer::PackedEngine engine(model);
    acc = train::evaluate(data, a.batch, [&](const Tensor& x) { return engine.logits(x); });
  }
  std::ostringstream o;
  char buf[64];
  o << "engine=" << a.engine << "\nsamples=" << acc.count << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", acc.top1());
  o << "top1=" << buf << "\n";
  if (auto t5 = acc.top5()) {
    std::snprintf(buf, sizeof buf, "%.6f", *t5);
    o << "top5=" << buf << "\n";
  }
  std::cout << o.str();
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(join(a.out, "eval_" + a.engine + ".txt"), o.str());
  }
  return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string config, checkpoint, preset, out;
};

int cmd_estimate(const EstimateArgs& a) {
  ModelSpec spec;
  if (!a.checkpoint.empty()) {
    spec = train::Model::load(a.checkpoint).spec();
  } else {
    auto cfg = cli::load_config(a.config);
    if (!a.preset.empty()) cfg.preset = a.preset;
    spec = cfg.model_spec();
  }
  spec.validate();
  const auto report = bits::estimate_costs(spec);
  bits::write_cost_text(std::cout, report);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    std::ostringstream csv;
    bits::write_cost_csv(csv, report);
    write_text(join(a.out, "costs.csv"), csv.str());
  }
  return 0;
}

// ---------------------------------------------------------------- dump-featuremaps

struct DumpArgs {
  std::string checkpoint, image, dataset, out = ".";
  std::size_t index = 0, layer = 0;
  std::optional<std::size_t> channel;
  std::uint64_t seed = 1;
};

int cmd_dump(const DumpArgs& a) {
  auto model = train::Model::load(a.checkpoint);
  const auto& in = model.spec().input;
  Tensor x;
  if (!a.image.empty()) {
    Tensor img = a.image.ends_with(".pgm") ? io::read_pgm(a.image) : load_tensor(a.image);
    if (shape_size(img.dims()) != shape_size(in))
      throw ShapeError("image " + shape_str(img.dims()) + " does not match model input " + shape_str(in));
    x = img.reshaped({1, in[0], in[1], in[2]});
  } else if (!a.dataset.empty()) {
    const auto data = data::load_dataset(a.dataset, a.seed, kValStream);
    if (a.index >= data.size()) throw ValueError("--index " + std::to_string(a.index) + " out of range");
    const std::size_t idx[] = {a.index};
    x = data.batch_images(idx);
  } else {
    throw ValueError("need --image or --dataset");
  }
  if (a.layer >= model.size())
    throw ValueError("layer index " + std::to_string(a.layer) + " out of range (model has " +
                     std::to_string(model.size()) + " layers)");
  const Tensor fm = model.forward_until(x, a.layer, train::Phase::eval);
  const std::size_t C = fm.dim(1), H = fm.dim(2), W = fm.dim(3);
  if (a.channel && *a.channel >= C)
    throw ValueError("channel " + std::to_string(*a.channel) + " out of range (layer has " + std::to_string(C) + ")");
  ensure_dir(a.out);
  std::size_t written = 0;
  for (std::size_t c = 0; c < C; ++c) {
    if (a.channel && c != *a.channel) continue;
    const auto path = join(a.out, "layer" + std::to_string(a.layer) + "_ch" + std::to_string(c) + ".pgm");
    io::write_pgm(path, fm.ptr() + c * H * W, H, W);
    ++written;
  }
  std::printf("wrote %zu feature map(s) of layer %zu (%s) to %s\n", written, a.layer,
              to_string(model.spec().layers[a.layer].kind).c_str(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ABC-Net binary CNN engine"};
  app.require_subcommand(1);

  ApproxArgs ap;
  auto* approx_cmd = app.add_subcommand("approx", "fit binary weight bases and report RMSE per M");
  auto* src = approx_cmd->add_option("--weights", ap.weights, "weight tensor file (ABCT)")->check(CLI::ExistingFile);
  approx_cmd->add_option("--gaussian", ap.gaussian, "use N standard-normal weights instead")->excludes(src);
  approx_cmd->add_option("--M", ap.Ms, "base counts")->delimiter(',');
  approx_cmd->add_option("--shifts", ap.shifts, "comma-separated u shifts (single M only)");
  approx_cmd->add_option("--ridge", ap.ridge, "ridge term")->check(CLI::NonNegativeNumber);
  approx_cmd->add_option("--mode", ap.mode)->check(CLI::IsMember({"whole", "channelwise"}));
  approx_cmd->add_option("--out", ap.out, "write reconstructions and rmse.csv here");
  approx_cmd->add_option("--seed", ap.seed);
  approx_cmd->add_option("--config", "accepted for uniformity; unused");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  train_cmd->add_option("--config", tr.config)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "output directory");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--preset", tr.preset, "override the config preset");
  train_cmd->add_option("--dataset", tr.dataset);
  train_cmd->add_option("--val-dataset", tr.val_dataset);
  train_cmd->add_option("--init", tr.init, "full-precision checkpoint to start from");
  train_cmd->add_option("--epochs", tr.epochs);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "top-1 / top-5 accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--engine", ev.engine)->check(CLI::IsMember({"float", "bitpacked"}));
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--batch", ev.batch)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", ev.out);
  eval_cmd->add_option("--config", "accepted for uniformity; unused");

  EstimateArgs es;
  auto* est_cmd = app.add_subcommand("estimate", "static memory and operation counts");
  auto* est_cfg = est_cmd->add_option("--config", es.config)->check(CLI::ExistingFile);
  auto* est_ckpt = est_cmd->add_option("--checkpoint", es.checkpoint)->check(CLI::ExistingFile);
  est_cfg->excludes(est_ckpt);
  est_cmd->add_option("--preset", es.preset);
  est_cmd->add_option("--out", es.out, "write costs.csv here");
  est_cmd->add_option("--seed", "accepted for uniformity; unused");

  DumpArgs du;
  auto* dump_cmd = app.add_subcommand("dump-featuremaps", "write one PGM per channel of a layer's output");
  dump_cmd->add_option("--checkpoint", du.checkpoint)->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--image", du.image, "PGM (P5) or ABCT input")->check(CLI::ExistingFile);
  dump_cmd->add_option("--dataset", du.dataset);
  dump_cmd->add_option("--index", du.index, "sample index within --dataset");
  dump_cmd->add_option("--layer", du.layer)->required();
  dump_cmd->add_option("--channel", du.channel, "dump only this channel");
  dump_cmd->add_option("--out", du.out);
  dump_cmd->add_option("--seed", du.seed);
  dump_cmd->add_option("--config", "accepted for uniformity; unused");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*approx_cmd) {
      if (ap.weights.empty() && ap.gaussian == 0) throw ValueError("need --weights or --gaussian");
      return cmd_approx(ap);
    }
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*est_cmd) {
      if (es.config.empty() && es.checkpoint.empty()) throw ValueError("need --config or --checkpoint");
      return cmd_estimate(es);
    }
    if (*dump_cmd) return cmd_dump(du);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
