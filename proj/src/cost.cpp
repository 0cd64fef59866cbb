#include "abcnet/cost.hpp"

#include <ostream>

namespace abc::bits {

CostReport estimate_costs(const ModelSpec& model) {
  const auto shapes = model.infer_shapes();
  CostReport r;
  Shape in = model.input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& L = model.layers[i];
    const Shape& out = shapes[i];
    if (L.kind == LayerKind::conv || L.kind == LayerKind::dense) {
      LayerCost c;
      c.index = i;
      c.kind = L.kind;
      const std::size_t fan_in = L.kind == LayerKind::conv ? in[0] * L.kernel.h * L.kernel.w : shape_size(in);
      c.weights = L.channels * fan_in;
      c.bases = L.bases;
      c.input_branches = model.input_branches(i);
      const std::uint64_t outputs = shape_size(out);
      c.macs = outputs * fan_in;
      c.fp_weight_bits = 32ull * c.weights;
      if (L.binarized()) {
        c.binary_weight_bits = static_cast<std::uint64_t>(L.bases) * c.weights;
        if (c.input_branches > 0) {
          const std::uint64_t pairs = static_cast<std::uint64_t>(L.bases) * c.input_branches;
          (L.kind == LayerKind::conv ? c.binconvs : c.binary_matvecs) = pairs;
          c.xnor_popcount_ops = pairs * c.macs;
          // alpha_m * beta_n scaling of every partial output
          c.float_mults = pairs * outputs;
        } else {
          // binary weights on real inputs: additions and subtractions, then alpha_m scaling
          c.binary_weight_convs = L.bases;
          c.float_mults = static_cast<std::uint64_t>(L.bases) * outputs;
        }
      } else {
        c.binary_weight_bits = c.fp_weight_bits;
        c.float_mults = c.macs;
      }
      c.memory_ratio = static_cast<double>(c.fp_weight_bits) / static_cast<double>(c.binary_weight_bits);
      c.float_mults_avoided = c.macs > c.float_mults ? c.macs - c.float_mults : 0;

      r.fp_weight_bits += c.fp_weight_bits;
      r.binary_weight_bits += c.binary_weight_bits;
      r.binconvs += c.binconvs;
      r.binary_matvecs += c.binary_matvecs;
      r.macs += c.macs;
      r.xnor_popcount_ops += c.xnor_popcount_ops;
      r.float_mults += c.float_mults;
      r.float_mults_avoided += c.float_mults_avoided;
      r.layers.push_back(c);
    }
    in = out;
  }
  if (r.binary_weight_bits > 0)
    r.memory_ratio = static_cast<double>(r.fp_weight_bits) / static_cast<double>(r.binary_weight_bits);
  return r;
}

void write_cost_text(std::ostream& os, const CostReport& r) {
  for (const auto& c : r.layers) {
    const std::string p = "layer." + std::to_string(c.index) + ".";
    os << p << "kind=" << to_string(c.kind) << '\n'
       << p << "weights=" << c.weights << '\n'
       << p << "M=" << c.bases << '\n'
       << p << "N=" << c.input_branches << '\n'
       << p << "fp_weight_bits=" << c.fp_weight_bits << '\n'
       << p << "binary_weight_bits=" << c.binary_weight_bits << '\n'
       << p << "memory_ratio=" << c.memory_ratio << '\n'
       << p << "binconvs=" << c.binconvs << '\n'
       << p << "binary_matvecs=" << c.binary_matvecs << '\n'
       << p << "binary_weight_convs=" << c.binary_weight_convs << '\n'
       << p << "macs=" << c.macs << '\n'
       << p << "xnor_popcount_ops=" << c.xnor_popcount_ops << '\n'
       << p << "float_mults=" << c.float_mults << '\n'
       << p << "float_mults_avoided=" << c.float_mults_avoided << '\n';
  }
  os << "total.fp_weight_bits=" << r.fp_weight_bits << '\n'
     << "total.binary_weight_bits=" << r.binary_weight_bits << '\n'
     << "total.memory_ratio=" << r.memory_ratio << '\n'
     << "total.binconvs=" << r.binconvs << '\n'
     << "total.binary_matvecs=" << r.binary_matvecs << '\n'
     << "total.macs=" << r.macs << '\n'
     << "total.xnor_popcount_ops=" << r.xnor_popcount_ops << '\n'
     << "total.float_mults=" << r.float_mults << '\n'
     << "total.float_mults_avoided=" << r.float_mults_avoided << '\n';
}

void write_cost_csv(std::ostream& os, const CostReport& r) {
  os << "layer,kind,weights,M,N,fp_weight_bits,binary_weight_bits,memory_ratio,binconvs,binary_matvecs,binary_weight_convs,macs,"
        "xnor_popcount_ops,float_mults,float_mults_avoided\n";
  for (const auto& c : r.layers)
    os << c.index << ',' << to_string(c.kind) << ',' << c.weights << ',' << c.bases << ',' << c.input_branches << ','
       << c.fp_weight_bits << ',' << c.binary_weight_bits << ',' << c.memory_ratio << ',' << c.binconvs << ','
       << c.binary_matvecs << ',' << c.binary_weight_convs << ',' << c.macs << ',' << c.xnor_popcount_ops << ',' << c.float_mults << ','
       << c.float_mults_avoided << '\n';
  os << "total,," << ",,," << r.fp_weight_bits << ',' << r.binary_weight_bits << ',' << r.memory_ratio << ','
     << r.binconvs << ',' << r.binary_matvecs << ",," << r.macs << ',' << r.xnor_popcount_ops << ',' << r.float_mults << ','
     << r.float_mults_avoided << '\n';
}

}  // namespace abc::bits
