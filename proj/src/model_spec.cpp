#include "abcnet/model_spec.hpp"

namespace abc {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::dense: return "dense";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::activation: return "activation";
    case LayerKind::flatten: return "flatten";
    case LayerKind::add: return "add";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::dense, LayerKind::maxpool, LayerKind::batchnorm, LayerKind::activation,
                 LayerKind::flatten, LayerKind::add})
    if (to_string(k) == s) return k;
  throw ValueError("unknown layer kind '" + s + "'");
}

bool LayerSpec::binarized() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::dense: return bases != kFullPrecision;
    case LayerKind::activation: return branches != 0;
    default: return false;
  }
}

std::vector<float> LayerSpec::weight_shifts() const {
  return shifts_u.empty() ? approx::default_shifts(bases) : shifts_u;
}

act::ActivationBank LayerSpec::initial_bank() const {
  auto bank = act::default_bank(branches);
  if (!shifts_v.empty()) bank.shifts = shifts_v;
  if (!betas.empty()) bank.betas = betas;
  return bank;
}

std::vector<Shape> ModelSpec::infer_shapes() const {
  std::vector<std::string> problems;
  std::vector<Shape> shapes;
  if (input.size() != 3 || shape_size(input) == 0) {
    problems.push_back("input must be CxHxW with positive extents, got " + shape_str(input));
    throw ValidationError(problems);
  }
  if (classes < 2) problems.push_back("classes must be >= 2");
  if (layers.empty()) problems.push_back("model has no layers");

  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& L = layers[i];
    const std::string at = "layer " + std::to_string(i) + " (" + to_string(L.kind) + "): ";
    switch (L.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        if (L.channels == 0) problems.push_back(at + "channels must be >= 1");
        if (L.binarized() && !L.shifts_u.empty() && L.shifts_u.size() != L.bases)
          problems.push_back(at + "shifts_u has " + std::to_string(L.shifts_u.size()) + " entries, M is " +
                             std::to_string(L.bases));
        if (L.kind == LayerKind::dense) {
          if (cur[1] != 1 || cur[2] != 1)
            problems.push_back(at + "dense input must be flattened, got " + shape_str(cur));
          cur = {L.channels, 1, 1};
          break;
        }
        if (L.mode == approx::Mode::channelwise && !L.binarized())
          problems.push_back(at + "channel-wise mode needs M >= 1");
        try {
          if (L.kernel.h == 0 || L.kernel.w == 0) throw ShapeError("kernel extents must be >= 1");
          const auto o = conv_output_extent({cur[1], cur[2]}, L.kernel, L.geometry);
          cur = {L.channels, o.h, o.w};
        } catch (const ShapeError& e) {
          problems.push_back(at + e.what());
        }
        break;
      }
      case LayerKind::maxpool: {
        try {
          if (L.kernel.h == 0 || L.kernel.w == 0) throw ShapeError("kernel extents must be >= 1");
          const auto o = conv_output_extent({cur[1], cur[2]}, L.kernel, ConvGeometry{L.geometry.stride, {0, 0}});
          cur = {cur[0], o.h, o.w};
        } catch (const ShapeError& e) {
          problems.push_back(at + e.what());
        }
        break;
      }
      case LayerKind::batchnorm: break;
      case LayerKind::activation:
        if (L.binarized()) {
          const std::size_t n = L.branches;
          if (!L.shifts_v.empty() && L.shifts_v.size() != n)
            problems.push_back(at + "shifts_v must have N = " + std::to_string(n) + " entries");
          if (!L.betas.empty() && L.betas.size() != n)
            problems.push_back(at + "betas must have N = " + std::to_string(n) + " entries");
        }
        break;
      case LayerKind::flatten: cur = {shape_size(cur), 1, 1}; break;
      case LayerKind::add:
        if (L.source >= i)
          problems.push_back(at + "source " + std::to_string(L.source) + " must be an earlier layer");
        else if (L.source < shapes.size() && shapes[L.source] != cur)
          problems.push_back(at + "source output " + shape_str(shapes[L.source]) + " does not match input " +
                             shape_str(cur));
        break;
    }
    shapes.push_back(cur);
  }
  if (!layers.empty() && problems.empty() && cur != Shape{classes, 1, 1})
    problems.push_back("final layer output " + shape_str(cur) + " does not match " + std::to_string(classes) +
                       " classes");
  if (!problems.empty()) throw ValidationError(problems);
  return shapes;
}

std::size_t ModelSpec::input_branches(std::size_t i) const {
  if (i == 0 || i > layers.size()) return 0;
  std::size_t j = i - 1;
  if (layers[i].kind == LayerKind::dense && layers[j].kind == LayerKind::flatten) {
    if (j == 0) return 0;
    --j;
  }
  const auto& prev = layers[j];
  return prev.kind == LayerKind::activation ? prev.branches : 0;
}

}  // namespace abc
