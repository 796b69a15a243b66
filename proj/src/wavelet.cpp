#include "fass/wavelet.hpp"

#include <algorithm>
#include <utility>

#include "fass/errors.hpp"
#include "fass/ops.hpp"
#include "fass/parallel.hpp"
#include "ops_common.hpp"

namespace fass {

namespace {

WaveletBasis make_basis(std::string name, std::vector<double> dec_lo, std::vector<double> dec_hi,
                        std::vector<double> rec_lo, std::vector<double> rec_hi) {
  return WaveletBasis{std::move(name), std::move(dec_lo), std::move(dec_hi), std::move(rec_lo), std::move(rec_hi)};
}

const std::vector<WaveletBasis>& catalogue() {
  static const std::vector<WaveletBasis> bases = [] {
    constexpr double r = 0.7071067811865476;
    std::vector<WaveletBasis> v;
    v.push_back(make_basis("haar", {r, r}, {-r, r}, {r, r}, {r, -r}));
    v.push_back(make_basis("db2", {-0.12940952255126037, 0.2241438680420134, 0.8365163037378079, 0.48296291314453416},
                           {-0.48296291314453416, 0.8365163037378079, -0.2241438680420134, -0.12940952255126037},
                           {0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037},
                           {-0.12940952255126037, -0.2241438680420134, 0.8365163037378079, -0.48296291314453416}));
    v.push_back(make_basis("coif1",
                           {-0.015655728135791993, -0.07273261951252645, 0.3848648468648578, 0.8525720202116004,
                            0.3378976624574818, -0.07273261951252645},
                           {0.07273261951252645, 0.3378976624574818, -0.8525720202116004, 0.3848648468648578,
                            0.07273261951252645, -0.015655728135791993},
                           {-0.07273261951252645, 0.3378976624574818, 0.8525720202116004, 0.3848648468648578,
                            -0.07273261951252645, -0.015655728135791993},
                           {-0.015655728135791993, 0.07273261951252645, 0.3848648468648578, -0.8525720202116004,
                            0.3378976624574818, 0.07273261951252645}));
    constexpr double a = 0.03314563036811941, b = 0.06629126073623882, c = 0.1767766952966369,
                     d = 0.4198446513295126, e = 0.9943689110435825, h = 0.3535533905932738;
    v.push_back(make_basis("bior2.4", {0.0, a, -b, -c, d, e, d, -c, -b, a}, {0, 0, 0, h, -2 * h, h, 0, 0, 0, 0},
                           {0, 0, 0, h, 2 * h, h, 0, 0, 0, 0}, {0.0, -a, -b, c, d, -e, d, c, -b, -a}));
    return v;
  }();
  return bases;
}

std::vector<double> reversed(const std::vector<double>& f) { return {f.rbegin(), f.rend()}; }

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// Periodized analysis of one plane into four quarter-size bands, ordered
// L, H, V, D. Along each axis: out[k] = sum_n f[n] x[(2k + L/2 - n) mod N].
void analyze_plane(const float* in, int rows, int cols, const std::vector<double>& lo, const std::vector<double>& hi,
                   float* const out[4]) {
  const int len = static_cast<int>(lo.size());
  const int shift = len / 2;
  const int hr = rows / 2, hc = cols / 2;
  std::vector<double> tlo(static_cast<std::size_t>(rows) * hc), thi(tlo.size());
  for (int r = 0; r < rows; ++r) {
    const float* row = in + static_cast<std::size_t>(r) * cols;
    for (int k = 0; k < hc; ++k) {
      double sl = 0.0, sh = 0.0;
      for (int n = 0; n < len; ++n) {
        const double x = row[wrap(2 * k + shift - n, cols)];
        sl += lo[n] * x;
        sh += hi[n] * x;
      }
      tlo[static_cast<std::size_t>(r) * hc + k] = sl;
      thi[static_cast<std::size_t>(r) * hc + k] = sh;
    }
  }
  for (int k = 0; k < hr; ++k) {
    for (int j = 0; j < hc; ++j) {
      double ll = 0.0, hl = 0.0, lh = 0.0, hh = 0.0;
      for (int n = 0; n < len; ++n) {
        const std::size_t src = static_cast<std::size_t>(wrap(2 * k + shift - n, rows)) * hc + j;
        ll += lo[n] * tlo[src];
        hl += hi[n] * tlo[src];
        lh += lo[n] * thi[src];
        hh += hi[n] * thi[src];
      }
      const std::size_t dst = static_cast<std::size_t>(k) * hc + j;
      out[0][dst] = static_cast<float>(ll);
      out[1][dst] = static_cast<float>(hl);
      out[2][dst] = static_cast<float>(lh);
      out[3][dst] = static_cast<float>(hh);
    }
  }
}

// Transpose of analyze_plane, accumulated into `out`.
void adjoint_plane(const float* const in[4], int rows, int cols, const std::vector<double>& lo,
                   const std::vector<double>& hi, float* out) {
  const int len = static_cast<int>(lo.size());
  const int shift = len / 2;
  const int hr = rows / 2, hc = cols / 2;
  std::vector<double> tlo(static_cast<std::size_t>(rows) * hc, 0.0), thi(tlo.size(), 0.0);
  for (int k = 0; k < hr; ++k)
    for (int j = 0; j < hc; ++j) {
      const std::size_t s = static_cast<std::size_t>(k) * hc + j;
      const double ll = in[0][s], hl = in[1][s], lh = in[2][s], hh = in[3][s];
      for (int n = 0; n < len; ++n) {
        const std::size_t dst = static_cast<std::size_t>(wrap(2 * k + shift - n, rows)) * hc + j;
        tlo[dst] += lo[n] * ll + hi[n] * hl;
        thi[dst] += lo[n] * lh + hi[n] * hh;
      }
    }
  std::vector<double> acc(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = 0; k < hc; ++k) {
      const double a = tlo[static_cast<std::size_t>(r) * hc + k];
      const double b = thi[static_cast<std::size_t>(r) * hc + k];
      for (int n = 0; n < len; ++n) acc[static_cast<std::size_t>(wrap(2 * k + shift - n, cols))] += lo[n] * a + hi[n] * b;
    }
    float* row = out + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += static_cast<float>(acc[static_cast<std::size_t>(c)]);
  }
}

struct PlaneLayout {
  std::size_t planes;  // C * D
  int rows, cols;      // even in-slice extent
  std::size_t plane_size() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t band_size() const { return plane_size() / 4; }
};

// [C, D, rows, cols] -> [4C, D, rows/2, cols/2] with band blocks L, H, V, D.
Tensor analysis_op(const Tensor& x, const std::vector<double>& lo, const std::vector<double>& hi) {
  const int channels = x.dim(0);
  const PlaneLayout lay{x.numel() / (static_cast<std::size_t>(x.dim(2)) * x.dim(3)), x.dim(2), x.dim(3)};
  const std::size_t band_block = lay.planes * lay.band_size();
  std::vector<float> out(4 * band_block);
  const auto xv = x.data();
  parallel_for(0, lay.planes, [&](std::size_t p) {
    float* dst[4];
    for (int b = 0; b < 4; ++b) dst[b] = out.data() + b * band_block + p * lay.band_size();
    analyze_plane(xv.data() + p * lay.plane_size(), lay.rows, lay.cols, lo, hi, dst);
  });
  Shape shape{4 * channels, x.dim(1), lay.rows / 2, lay.cols / 2};
  return detail::make_result(shape, std::move(out), {x}, [lay, band_block, lo, hi](detail::Node& self) {
    float* gx = detail::grad_ptr(*self.inputs[0]);
    if (!gx) return;
    parallel_for(0, lay.planes, [&](std::size_t p) {
      const float* src[4];
      for (int b = 0; b < 4; ++b) src[b] = self.grad.data() + b * band_block + p * lay.band_size();
      adjoint_plane(src, lay.rows, lay.cols, lo, hi, gx + p * lay.plane_size());
    });
  });
}

// [4C, D, h, w] band stack -> [C, D, 2h, 2w].
Tensor synthesis_op(const Tensor& stack, const std::vector<double>& lo, const std::vector<double>& hi) {
  const int channels = stack.dim(0) / 4;
  const PlaneLayout lay{static_cast<std::size_t>(channels) * stack.dim(1), 2 * stack.dim(2), 2 * stack.dim(3)};
  const std::size_t band_block = lay.planes * lay.band_size();
  std::vector<float> out(lay.planes * lay.plane_size(), 0.0f);
  const auto sv = stack.data();
  parallel_for(0, lay.planes, [&](std::size_t p) {
    const float* src[4];
    for (int b = 0; b < 4; ++b) src[b] = sv.data() + b * band_block + p * lay.band_size();
    adjoint_plane(src, lay.rows, lay.cols, lo, hi, out.data() + p * lay.plane_size());
  });
  Shape shape{channels, stack.dim(1), lay.rows, lay.cols};
  return detail::make_result(shape, std::move(out), {stack}, [lay, band_block, lo, hi](detail::Node& self) {
    float* gs = detail::grad_ptr(*self.inputs[0]);
    if (!gs) return;
    std::vector<float> tmp(4 * band_block);
    parallel_for(0, lay.planes, [&](std::size_t p) {
      float* dst[4];
      for (int b = 0; b < 4; ++b) dst[b] = tmp.data() + b * band_block + p * lay.band_size();
      analyze_plane(self.grad.data() + p * lay.plane_size(), lay.rows, lay.cols, lo, hi, dst);
    });
    for (std::size_t i = 0; i < tmp.size(); ++i) gs[i] += tmp[i];
  });
}

}  // namespace

WaveletBasis WaveletBasis::named(std::string_view name) {
  for (const WaveletBasis& b : catalogue())
    if (b.name == name) return b;
  throw ConfigError("unknown wavelet basis '" + std::string(name) + "' (expected haar, db2, coif1 or bior2.4)");
}

const std::vector<std::string>& WaveletBasis::names() {
  static const std::vector<std::string> n = [] {
    std::vector<std::string> v;
    for (const WaveletBasis& b : catalogue()) v.push_back(b.name);
    return v;
  }();
  return n;
}

const Tensor& SubbandSet::band(Subband b) const {
  switch (b) {
    case Subband::L: return L;
    case Subband::H: return H;
    case Subband::V: return V;
    case Subband::D: return D;
  }
  throw ContractError("unknown subband");
}

Tensor& SubbandSet::band(Subband b) { return const_cast<Tensor&>(std::as_const(*this).band(b)); }

SubbandSet dwt_slicewise(const Tensor& f, const WaveletBasis& basis) {
  detail::require_rank(f, 4, "dwt_slicewise");
  const int rows = f.dim(2), cols = f.dim(3);
  const int prows = rows + rows % 2, pcols = cols + cols % 2;
  if (prows < basis.length() || pcols < basis.length()) {
    throw DimensionError("dwt_slicewise: slice " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " is smaller than the " + basis.name + " filter length " + std::to_string(basis.length()));
  }
  const Tensor padded = (prows != rows || pcols != cols) ? pad_symmetric_last2(f, prows - rows, pcols - cols) : f;
  const Tensor stack = analysis_op(padded, basis.dec_lo, basis.dec_hi);
  const int c = f.dim(0);
  SubbandSet s;
  s.L = narrow0(stack, 0, c);
  s.H = narrow0(stack, c, c);
  s.V = narrow0(stack, 2 * c, c);
  s.D = narrow0(stack, 3 * c, c);
  s.rows = rows;
  s.cols = cols;
  return s;
}

Tensor idwt_slicewise(const SubbandSet& bands, const WaveletBasis& basis) {
  const Shape& shape = bands.L.shape();
  for (const Tensor* t : {&bands.H, &bands.V, &bands.D}) {
    if (t->shape() != shape) {
      throw DimensionError("idwt_slicewise: band shapes " + shape_str(shape) + " and " + shape_str(t->shape()) +
                           " differ");
    }
  }
  detail::require_rank(bands.L, 4, "idwt_slicewise");
  const int prows = 2 * shape[2], pcols = 2 * shape[3];
  const int rows = bands.rows > 0 ? bands.rows : prows;
  const int cols = bands.cols > 0 ? bands.cols : pcols;
  if (rows + rows % 2 != prows || cols + cols % 2 != pcols) {
    throw DimensionError("idwt_slicewise: recorded source extent does not match the band size");
  }
  const Tensor full = synthesis_op(concat0({bands.L, bands.H, bands.V, bands.D}), reversed(basis.rec_lo),
                                   reversed(basis.rec_hi));
  return (rows != prows || cols != pcols) ? crop_last2(full, rows, cols) : full;
}

}  // namespace fass
