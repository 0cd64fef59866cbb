#include "abcnet/approx.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "abcnet/bitplane.hpp"

namespace abc::approx {

void WeightBaseSet::validate() const {
  const std::size_t M = bases.size();
  if (M == 0) throw ValueError("weight base set needs M >= 1");
  const Shape& wd = bases.front().dims();
  for (const auto& b : bases) {
    if (b.dims() != wd) throw ShapeError("weight bases disagree in dims");
    for (float x : b.data())
      if (x != 1.0f && x != -1.0f) throw ValueError("weight base element is not +-1");
  }
  const Shape expect = mode == Mode::whole ? Shape{M} : Shape{wd.at(0), M};
  if (alphas.dims() != expect || shifts.dims() != expect)
    throw ShapeError("alphas/shifts must have dims " + shape_str(expect));
}

std::vector<float> default_shifts(std::size_t M) {
  if (M == 0) throw ValueError("M must be >= 1");
  if (M == 1) return {0.0f};
  std::vector<float> u(M);
  for (std::size_t i = 0; i < M; ++i)
    u[i] = static_cast<float>(-1.0 + static_cast<double>(i) * 2.0 / static_cast<double>(M - 1));
  return u;
}

std::vector<Tensor> make_bases(const Tensor& W, std::span<const float> shifts) {
  if (W.empty()) throw ShapeError("make_bases on empty tensor");
  if (shifts.empty()) throw ValueError("make_bases needs at least one shift");
  const double mu = mean(W), sd = stddev(W);
  std::vector<Tensor> bases;
  bases.reserve(shifts.size());
  for (float u : shifts) {
    Tensor B(W.dims());
    if (sd == 0.0) {
      B.fill(u < 0.0f ? -1.0f : 1.0f);
    } else {
      const double shift = static_cast<double>(u) * sd;
      for (std::size_t i = 0; i < W.size(); ++i) B[i] = (W[i] - mu) + shift >= 0.0 ? 1.0f : -1.0f;
    }
    bases.push_back(std::move(B));
  }
  return bases;
}

std::vector<double> solve_alphas(const Tensor& W, std::span<const Tensor> bases, double ridge) {
  const std::size_t M = bases.size();
  if (M == 0) throw ValueError("solve_alphas needs at least one base");
  if (ridge < 0.0) throw ValueError("ridge must be non-negative");
  for (const auto& b : bases)
    if (b.dims() != W.dims()) throw ShapeError("base dims " + shape_str(b.dims()) + " != " + shape_str(W.dims()));

  Eigen::MatrixXd gram(M, M);
  Eigen::VectorXd rhs(M);
  for (std::size_t i = 0; i < M; ++i) {
    const auto bi = bases[i].data();
    double r = 0.0;
    for (std::size_t k = 0; k < W.size(); ++k) r += static_cast<double>(bi[k]) * W[k];
    rhs(i) = r;
    for (std::size_t j = i; j < M; ++j) {
      const auto bj = bases[j].data();
      double g = 0.0;
      for (std::size_t k = 0; k < W.size(); ++k) g += static_cast<double>(bi[k]) * bj[k];
      gram(i, j) = gram(j, i) = g;
    }
  }
  gram.diagonal().array() += ridge;

  if (ridge == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition)
      throw SingularSystemError("normal equations are singular (condition estimate " +
                                (lo > 0.0 ? std::to_string(hi / lo) : std::string("inf")) +
                                "); use a positive ridge");
  }
  const Eigen::VectorXd a = gram.ldlt().solve(rhs);
  return {a.data(), a.data() + M};
}

Tensor reconstruct(const WeightBaseSet& bs) {
  const std::size_t M = bs.count();
  if (M == 0) throw ValueError("reconstruct of empty base set");
  Tensor out(bs.bases.front().dims());
  const std::size_t per_channel = bs.mode == Mode::whole ? out.size() : out.size() / out.dim(0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = bs.mode == Mode::whole ? 0 : i / per_channel;
    double acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) acc += static_cast<double>(bs.alpha(ch, m)) * bs.bases[m][i];
    out[i] = static_cast<float>(acc);
  }
  return out;
}

WeightBaseSet approximate(const Tensor& W, std::span<const float> shifts, double ridge) {
  WeightBaseSet bs;
  bs.mode = Mode::whole;
  bs.bases = make_bases(W, shifts);
  const auto a = solve_alphas(W, bs.bases, ridge);
  bs.alphas = Tensor({a.size()});
  for (std::size_t m = 0; m < a.size(); ++m) bs.alphas[m] = static_cast<float>(a[m]);
  bs.shifts = Tensor({shifts.size()}, std::vector<float>(shifts.begin(), shifts.end()));
  return bs;
}

WeightBaseSet approximate(const Tensor& W, std::size_t M, double ridge) {
  const auto u = default_shifts(M);
  return approximate(W, std::span<const float>(u), ridge);
}

WeightBaseSet approximate_channelwise(const Tensor& W, std::span<const float> shifts, double ridge) {
  if (W.rank() != 4) throw ShapeError("channel-wise approximation expects [c_out, c_in, kh, kw], got " +
                                      shape_str(W.dims()));
  const std::size_t C = W.dim(0), M = shifts.size(), per = W.size() / C;
  if (M == 0) throw ValueError("approximate_channelwise needs at least one shift");
  WeightBaseSet bs;
  bs.mode = Mode::channelwise;
  bs.bases.assign(M, Tensor(W.dims()));
  bs.alphas = Tensor({C, M});
  bs.shifts = Tensor({C, M});

  const Shape slice_dims{W.dim(1), W.dim(2), W.dim(3)};
  std::vector<std::exception_ptr> errors(C);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < C; ++c) {
    try {
      Tensor slice(slice_dims, std::vector<float>(W.data().begin() + c * per, W.data().begin() + (c + 1) * per));
      const auto fit = approximate(slice, shifts, ridge);
      for (std::size_t m = 0; m < M; ++m) {
        std::copy(fit.bases[m].data().begin(), fit.bases[m].data().end(), bs.bases[m].data().begin() + c * per);
        bs.alphas[c * M + m] = fit.alphas[m];
        bs.shifts[c * M + m] = shifts[m];
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return bs;
}

WeightBaseSet approximate_channelwise(const Tensor& W, std::size_t M, double ridge) {
  const auto u = default_shifts(M);
  return approximate_channelwise(W, std::span<const float>(u), ridge);
}

WeightBaseSet approximate(const Tensor& W, Mode mode, std::span<const float> shifts, double ridge) {
  return mode == Mode::whole ? approximate(W, shifts, ridge) : approximate_channelwise(W, shifts, ridge);
}

double rmse(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw ShapeError("rmse: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  if (a.empty()) throw ShapeError("rmse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

void write_base_set(io::ByteWriter& w, const WeightBaseSet& bs) {
  w.u32(static_cast<std::uint32_t>(bs.count()));
  w.u8(static_cast<std::uint8_t>(bs.mode));
  write_tensor(w, bs.shifts);
  write_tensor(w, bs.alphas);
  for (const auto& b : bs.bases) bits::write_bitplane(w, bits::pack(b));
}

WeightBaseSet read_base_set(io::ByteReader& r) {
  WeightBaseSet bs;
  const auto M = r.u32();
  if (M == 0) r.fail("weight base set with M == 0");
  const auto mode = r.u8();
  if (mode > 1) r.fail("unknown approximation mode " + std::to_string(mode));
  bs.mode = static_cast<Mode>(mode);
  bs.shifts = read_tensor(r);
  bs.alphas = read_tensor(r);
  for (std::uint32_t m = 0; m < M; ++m) bs.bases.push_back(bits::unpack(bits::read_bitplane(r)));
  try {
    bs.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return bs;
}

}  // namespace abc::approx
