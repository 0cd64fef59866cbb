#include "abcnet/config.hpp"

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

namespace abc::cli {

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"fp", 0, 0, {}, {}, {}},
      {"m1n1", 1, 1, {0.0f}, {0.0f}, {1.0f}},
      {"m3n1", 3, 1, {-1.0f, 0.0f, 1.0f}, {0.0f}, {1.0f}},
      {"m3n3", 3, 3, {-1.0f, 0.0f, 1.0f}, {-1.5f, 0.0f, 1.5f}, {1.0f, 1.0f, 1.0f}},
      {"m3n5", 3, 5, {-1.0f, 0.0f, 1.0f}, {-3.5f, -2.5f, -1.5f, 0.0f, 2.5f}, {1.0f, 1.0f, 1.0f, 1.0f, 1.0f}},
      {"m5n1", 5, 1, {-2.0f, -1.0f, 0.0f, 1.0f, 2.0f}, {0.0f}, {1.0f}},
      {"m5n3", 5, 3, {-2.0f, -1.0f, 0.0f, 1.0f, 2.0f}, {-0.9f, 0.0f, 0.9f}, {1.0f, 1.0f, 1.0f}},
      {"m5n5", 5, 5, {-1.0f, -0.5f, 0.0f, 0.5f, 1.0f}, {-3.5f, -2.5f, -1.5f, 0.0f, 2.5f},
       {1.0f, 1.0f, 1.0f, 1.0f, 1.0f}},
  };
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ValueError("unknown preset '" + name + "'");
}

std::string format_float(float v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ValueError("'" + s + "' is not a valid number");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValueError("'" + s + "' is not true or false");
}

std::vector<float> parse_floats(const std::string& s) {
  std::vector<float> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<float>(trim(item)));
  if (out.empty()) throw ValueError("empty list");
  return out;
}

std::vector<std::size_t> parse_dims(const std::string& s, std::size_t count) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, 'x')) out.push_back(parse_number<std::size_t>(trim(item)));
  if (out.size() != count) throw ValueError("'" + s + "' needs " + std::to_string(count) + " extents joined by 'x'");
  return out;
}

Extent2 parse_extent(const std::string& s) {
  const auto d = parse_dims(s, 2);
  return {d[0], d[1]};
}

approx::Mode parse_mode(const std::string& s) {
  if (s == "whole") return approx::Mode::whole;
  if (s == "channelwise") return approx::Mode::channelwise;
  throw ValueError("mode must be whole or channelwise, got '" + s + "'");
}

std::string floats_str(const std::vector<float>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_float(v[i]);
  return out;
}

std::string extent_str(Extent2 e) { return std::to_string(e.h) + "x" + std::to_string(e.w); }

bool has_weights(LayerKind k) { return k == LayerKind::conv || k == LayerKind::dense; }

void set_layer_key(LayerConfig& L, const std::string& key, const std::string& value) {
  if (key == "kind") {
    L.kind = layer_kind_from_string(value);
  } else if (key == "channels") {
    L.channels = parse_number<std::size_t>(value);
  } else if (key == "kernel") {
    L.kernel = parse_extent(value);
  } else if (key == "stride") {
    L.stride = parse_extent(value);
  } else if (key == "padding") {
    L.padding = parse_extent(value);
  } else if (key == "M") {
    L.M = parse_number<std::size_t>(value);
  } else if (key == "mode") {
    L.mode = parse_mode(value);
  } else if (key == "shifts_u") {
    L.shifts_u = parse_floats(value);
  } else if (key == "N") {
    L.N = parse_number<std::size_t>(value);
  } else if (key == "shifts_v") {
    L.shifts_v = parse_floats(value);
  } else if (key == "betas") {
    L.betas = parse_floats(value);
  } else if (key == "fold") {
    L.fold = parse_bool(value);
  } else if (key == "from") {
    L.from = parse_number<std::size_t>(value);
  } else {
    throw ValueError("unknown layer key '" + key + "'");
  }
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") c.seed = parse_number<std::uint64_t>(value);
  else if (key == "dataset") c.dataset = value;
  else if (key == "val_dataset") c.val_dataset = value;
  else if (key == "preset") c.preset = value;
  else if (key == "first_layer_fp") c.first_layer_fp = parse_bool(value);
  else if (key == "init_from") c.init_from = value;
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(value);
  else if (key == "lr_decay") c.lr_decay = parse_number<double>(value);
  else if (key == "momentum") c.momentum = parse_number<double>(value);
  else if (key == "ridge") c.ridge = parse_number<double>(value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(value);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(value);
  else if (key == "input") c.input = parse_dims(value, 3);
  else if (key == "classes") c.classes = parse_number<std::size_t>(value);
  else throw ValueError("unknown key '" + key + "'");
}

void check_dataset_paths(const std::string& spec, const char* key, std::vector<std::string>& p) {
  if (spec.rfind("idx:", 0) != 0) return;
  std::stringstream ss(spec.substr(4));
  std::string path;
  while (std::getline(ss, path, ','))
    if (!std::filesystem::exists(path)) p.push_back(std::string(key) + ": file '" + path + "' does not exist");
}

}  // namespace

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.learning_rate = learning_rate;
  t.lr_decay = lr_decay;
  t.momentum = momentum;
  t.ridge = ridge;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

ModelSpec RunConfig::model_spec() const {
  const Preset& P = find_preset(preset);
  ModelSpec s;
  s.input = input;
  s.classes = classes;
  std::size_t last_dense = layers.size();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::dense) last_dense = i;
  bool seen_conv = false;

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    LayerSpec o;
    o.kind = L.kind;
    o.fold = L.fold;
    o.source = L.from;
    if (has_weights(L.kind)) {
      o.channels = L.channels;
      if (L.kind == LayerKind::conv) {
        o.kernel = L.kernel;
        o.geometry = {L.stride, L.padding};
      }
      const bool first = L.kind == LayerKind::conv && !seen_conv;
      seen_conv = seen_conv || L.kind == LayerKind::conv;
      if (L.M)
        o.bases = *L.M;
      else if (i == last_dense || (first && first_layer_fp))
        o.bases = kFullPrecision;
      else
        o.bases = P.M;
      o.mode = L.mode.value_or(approx::Mode::whole);
      if (L.shifts_u)
        o.shifts_u = *L.shifts_u;
      else if (o.bases != kFullPrecision && o.bases == P.M)
        o.shifts_u = P.u;
    } else if (L.kind == LayerKind::maxpool) {
      o.kernel = L.kernel;
      o.geometry.stride = L.stride;
    } else if (L.kind == LayerKind::activation) {
      o.branches = L.N.value_or(P.N);
      const bool from_preset = o.branches != 0 && o.branches == P.N;
      if (L.shifts_v)
        o.shifts_v = *L.shifts_v;
      else if (from_preset)
        o.shifts_v = P.v;
      if (L.betas)
        o.betas = *L.betas;
      else if (from_preset)
        o.betas = P.betas;
    }
    s.layers.push_back(std::move(o));
  }
  return s;
}

void RunConfig::validate() const {
  std::vector<std::string> p;
  try {
    train_config().validate();
  } catch (const ValidationError& e) {
    p.insert(p.end(), e.problems().begin(), e.problems().end());
  }
  bool preset_ok = true;
  try {
    find_preset(preset);
  } catch (const ValueError& e) {
    p.push_back(e.what());
    preset_ok = false;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    const std::string at = "layer " + std::to_string(i) + ": ";
    if (!has_weights(L.kind) && (L.M || L.mode || L.shifts_u))
      p.push_back(at + "M, mode and shifts_u only apply to conv and dense");
    if (L.kind != LayerKind::activation && (L.N || L.shifts_v || L.betas))
      p.push_back(at + "N, shifts_v and betas only apply to activation");
  }
  if (preset_ok) {
    try {
      model_spec().validate();
    } catch (const ValidationError& e) {
      p.insert(p.end(), e.problems().begin(), e.problems().end());
    }
  }
  check_dataset_paths(dataset, "dataset", p);
  check_dataset_paths(val_dataset, "val_dataset", p);
  if (!init_from.empty() && !std::filesystem::exists(init_from))
    p.push_back("init_from: file '" + init_from + "' does not exist");
  if (!p.empty()) throw ValidationError(p);
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  c.layers.clear();
  std::vector<std::string> problems;
  std::stringstream ss(text);
  std::string raw;
  std::size_t line_no = 0;
  bool in_layer = false;
  while (std::getline(ss, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(line_no) + ": ";
    if (line == "[layer]") {
      c.layers.emplace_back();
      in_layer = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(at + "expected key = value or [layer]");
      continue;
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (in_layer)
        set_layer_key(c.layers.back(), key, value);
      else
        set_key(c, key, value);
    } catch (const Error& e) {
      problems.push_back(at + key + ": " + e.what());
    }
  }
  if (!problems.empty()) throw ValidationError(problems);
  return c;
}

RunConfig load_config(const std::string& path) {
  const auto bytes = io::read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "seed = " << c.seed << "\n";
  o << "dataset = " << c.dataset << "\n";
  o << "val_dataset = " << c.val_dataset << "\n";
  o << "preset = " << c.preset << "\n";
  o << "first_layer_fp = " << (c.first_layer_fp ? "true" : "false") << "\n";
  if (!c.init_from.empty()) o << "init_from = " << c.init_from << "\n";
  o << "learning_rate = " << format_double(c.learning_rate) << "\n";
  o << "lr_decay = " << format_double(c.lr_decay) << "\n";
  o << "momentum = " << format_double(c.momentum) << "\n";
  o << "ridge = " << format_double(c.ridge) << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "input = " << c.input.at(0) << "x" << c.input.at(1) << "x" << c.input.at(2) << "\n";
  o << "classes = " << c.classes << "\n";
  const LayerConfig defaults;
  for (const auto& L : c.layers) {
    o << "\n[layer]\nkind = " << to_string(L.kind) << "\n";
    // Keys that belong to the kind are always written; any other key only
    // when it differs from its default, so every parsed file round-trips.
    const bool weights = has_weights(L.kind), conv = L.kind == LayerKind::conv;
    const bool pool = L.kind == LayerKind::maxpool;
    if (weights || L.channels != defaults.channels) o << "channels = " << L.channels << "\n";
    if (conv || pool || L.kernel != defaults.kernel) o << "kernel = " << extent_str(L.kernel) << "\n";
    if (conv || pool || L.stride != defaults.stride) o << "stride = " << extent_str(L.stride) << "\n";
    if (conv || L.padding != defaults.padding) o << "padding = " << extent_str(L.padding) << "\n";
    if (L.M) o << "M = " << *L.M << "\n";
    if (L.mode) o << "mode = " << (*L.mode == approx::Mode::whole ? "whole" : "channelwise") << "\n";
    if (L.shifts_u) o << "shifts_u = " << floats_str(*L.shifts_u) << "\n";
    if (L.N) o << "N = " << *L.N << "\n";
    if (L.shifts_v) o << "shifts_v = " << floats_str(*L.shifts_v) << "\n";
    if (L.betas) o << "betas = " << floats_str(*L.betas) << "\n";
    if (L.kind == LayerKind::add || L.from != defaults.from) o << "from = " << L.from << "\n";
    if (L.kind == LayerKind::batchnorm || L.fold != defaults.fold)
      o << "fold = " << (L.fold ? "true" : "false") << "\n";
  }
  return o.str();
}

}  // namespace abc::cli
