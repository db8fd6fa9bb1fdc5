#include "lvr/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace lvr {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vec& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) throw InvalidInput("matrix multiply: inner dimensions differ");
  Matrix out(rows_, rhs.cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(r, k);
      if (a == 0.0) continue;
      const double* rhs_row = rhs.row_ptr(k);
      double* out_row = out.row_ptr(r);
      for (std::size_t c = 0; c < rhs.cols_; ++c) out_row[c] += a * rhs_row[c];
    }
  }
  return out;
}

Matrix Matrix::operator+(const Matrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw InvalidInput("matrix add: shape mismatch");
  Matrix out = *this;
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] += rhs.data_[i];
  return out;
}

Matrix Matrix::operator-(const Matrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_) throw InvalidInput("matrix sub: shape mismatch");
  Matrix out = *this;
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] -= rhs.data_[i];
  return out;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Vec Matrix::apply(const Vec& x) const {
  if (x.size() != cols_) throw InvalidInput("matrix apply: dimension mismatch");
  Vec y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = row_ptr(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vec Matrix::apply_transposed(const Vec& x) const {
  if (x.size() != rows_) throw InvalidInput("matrix apply_transposed: dimension mismatch");
  Vec y(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = row_ptr(r);
    const double a = x[r];
    for (std::size_t c = 0; c < cols_; ++c) y[c] += a * row[c];
  }
  return y;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void DiscreteDistribution::validate() const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-15)) throw InvalidInput("distribution: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("distribution: probabilities do not sum to 1");
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidInput("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidInput("sub: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidInput("add: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec scale(const Vec& a, double s) {
  Vec out(a);
  for (double& v : out) v *= s;
  return out;
}

std::pair<Vec, Matrix> symmetric_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("symmetric_eigen: matrix not square");
  if (!m.all_finite()) throw InvalidInput("symmetric_eigen: non-finite entries");
  const std::size_t n = m.rows();
  Matrix a(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) a(r, c) = 0.5 * (m(r, c) + m(c, r));
  Matrix v = Matrix::identity(n);

  const double scale = std::max(1.0, a.frobenius_norm());
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) < 1e-14 * scale) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = a(p, i) = c * aip - s * aiq;
          a(i, q) = a(q, i) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  Vec eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return eig[x] > eig[y]; });
  Vec sorted(n);
  Matrix vs(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    sorted[k] = eig[order[k]];
    for (std::size_t i = 0; i < n; ++i) vs(i, k) = v(i, order[k]);
  }
  return {sorted, vs};
}

Matrix pseudo_inverse(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("pseudo_inverse: matrix not square");
  if (!m.all_finite()) throw InvalidInput("pseudo_inverse: non-finite entries");
  auto [eig, vecs] = symmetric_eigen(m);
  const std::size_t n = m.rows();
  double sigma_max = 0.0;
  for (double e : eig) sigma_max = std::max(sigma_max, std::abs(e));
  const double cutoff = 1e-10 * sigma_max;
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(eig[k]) <= cutoff) continue;
    const double inv = 1.0 / eig[k];
    for (std::size_t r = 0; r < n; ++r) {
      const double vr = vecs(r, k) * inv;
      if (vr == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) out(r, c) += vr * vecs(c, k);
    }
  }
  return out;
}

Matrix row_space_projection(const Matrix& w) {
  if (w.empty()) throw InvalidInput("row_space_projection: empty matrix");
  const Matrix wt = w.transpose();
  const Matrix gram = w * wt;  // action_dim x action_dim
  const Matrix gram_pinv = pseudo_inverse(gram);
  return wt * gram_pinv * w;
}

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InvalidInput("cosine_similarity: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

DiscreteDistribution softmax(const Vec& scores, double tau) {
  if (!(tau > 0.0)) throw InvalidParameter("softmax: tau must be positive");
  if (scores.empty()) throw InvalidInput("softmax: empty score vector");
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  DiscreteDistribution d;
  d.probs.resize(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    d.probs[i] = std::exp((scores[i] - mx) / tau);
    sum += d.probs[i];
  }
  for (double& p : d.probs) p /= sum;
  return d;
}

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.size() != q.size()) throw InvalidInput("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.probs[i];
    if (pi <= 0.0) continue;
    const double qi = std::max(q.probs[i], 1e-12);
    kl += pi * std::log(pi / qi);
  }
  return kl;
}

PcaResult pca(const std::vector<Vec>& samples, std::size_t k) {
  if (samples.size() < 2) throw InvalidInput("pca: need at least two samples");
  const std::size_t n = samples.size();
  const std::size_t d = samples[0].size();
  if (d == 0) throw InvalidInput("pca: zero-dimensional samples");
  if (k < 1 || k > d) throw InvalidInput("pca: k out of range");
  for (const Vec& s : samples)
    if (s.size() != d) throw InvalidInput("pca: inconsistent sample dimensions");

  Vec mean(d, 0.0);
  for (const Vec& s : samples)
    for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
  for (double& v : mean) v /= static_cast<double>(n);

  Matrix cov(d, d);
  for (const Vec& s : samples) {
    for (std::size_t r = 0; r < d; ++r) {
      const double xr = s[r] - mean[r];
      if (xr == 0.0) continue;
      for (std::size_t c = r; c < d; ++c) cov(r, c) += xr * (s[c] - mean[c]);
    }
  }
  const double inv_nm1 = 1.0 / static_cast<double>(n - 1);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      cov(r, c) *= inv_nm1;
      cov(c, r) = cov(r, c);
    }

  auto [eig, vecs] = symmetric_eigen(cov);
  PcaResult res;
  res.components = Matrix(k, d);
  res.explained_variance.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    res.explained_variance[j] = std::max(eig[j], 0.0);
    for (std::size_t c = 0; c < d; ++c) res.components(j, c) = vecs(c, j);
  }
  res.total_variance = 0.0;
  for (std::size_t i = 0; i < d; ++i) res.total_variance += cov(i, i);
  return res;
}

namespace {

// Householder reduction to upper Hessenberg form; n is tiny so reflectors
// are applied across full rows/columns.
void hessenberg(Matrix& h) {
  const std::size_t n = h.rows();
  if (n < 3) return;
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double xnorm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) xnorm += h(i, k) * h(i, k);
    xnorm = std::sqrt(xnorm);
    if (xnorm < 1e-300) continue;
    const double x0 = h(k + 1, k);
    const double alpha = (x0 >= 0.0 ? -xnorm : xnorm);
    Vec v(n, 0.0);
    v[k + 1] = x0 - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = h(i, k);
    double vtv = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vtv += v[i] * v[i];
    if (vtv < 1e-300) continue;
    const double beta = 2.0 / vtv;
    // H := (I - beta v v^T) H
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * h(i, c);
      s *= beta;
      for (std::size_t i = k + 1; i < n; ++i) h(i, c) -= s * v[i];
    }
    // H := H (I - beta v v^T)
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += h(r, i) * v[i];
      s *= beta;
      for (std::size_t i = k + 1; i < n; ++i) h(r, i) -= s * v[i];
    }
  }
}

// Similarity transform by a Householder reflector built from (x, y, z),
// acting on rows/cols k..k+2 (or k..k+1 when z is unused).
void apply_bulge_reflector(Matrix& h, std::size_t k, double x, double y, double z, bool three) {
  const std::size_t n = h.rows();
  const double nrm = std::sqrt(x * x + y * y + (three ? z * z : 0.0));
  if (nrm < 1e-300) return;
  const double alpha = (x >= 0.0 ? -nrm : nrm);
  double v0 = x - alpha, v1 = y, v2 = three ? z : 0.0;
  const double vtv = v0 * v0 + v1 * v1 + v2 * v2;
  if (vtv < 1e-300) return;
  const double beta = 2.0 / vtv;
  const std::size_t m = three ? 3 : 2;
  const double v[3] = {v0, v1, v2};
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += v[i] * h(k + i, c);
    s *= beta;
    for (std::size_t i = 0; i < m; ++i) h(k + i, c) -= s * v[i];
  }
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += h(r, k + i) * v[i];
    s *= beta;
    for (std::size_t i = 0; i < m; ++i) h(r, k + i) -= s * v[i];
  }
}

// One implicit double-shift QR sweep on the active block [lo, hi].
// Requires hi - lo >= 2; 2x2 blocks are resolved in closed form by the caller.
void francis_sweep(Matrix& h, std::size_t lo, std::size_t hi, double shift_s, double shift_t) {
  double x = h(lo, lo) * h(lo, lo) + h(lo, lo + 1) * h(lo + 1, lo) - shift_s * h(lo, lo) + shift_t;
  double y = h(lo + 1, lo) * (h(lo, lo) + h(lo + 1, lo + 1) - shift_s);
  double z = h(lo + 2, lo + 1) * h(lo + 1, lo);
  for (std::size_t k = lo; k <= hi - 2; ++k) {
    if (k > lo) {
      x = h(k, k - 1);
      y = h(k + 1, k - 1);
      z = (k + 2 <= hi) ? h(k + 2, k - 1) : 0.0;
    }
    apply_bulge_reflector(h, k, x, y, z, /*three=*/true);
  }
  apply_bulge_reflector(h, hi - 1, h(hi - 1, hi - 2), h(hi, hi - 2), 0.0, /*three=*/false);
}

void push_block2_magnitudes(const Matrix& h, std::size_t p, Vec& mags) {
  const double a = h(p, p), b = h(p, p + 1), c = h(p + 1, p), d = h(p + 1, p + 1);
  const double tr = a + d;
  const double det = a * d - b * c;
  const double disc = 0.25 * tr * tr - det;
  if (disc >= 0.0) {
    const double sq = std::sqrt(disc);
    mags.push_back(std::abs(0.5 * tr + sq));
    mags.push_back(std::abs(0.5 * tr - sq));
  } else {
    const double mag = std::sqrt(std::max(det, 0.0));
    mags.push_back(mag);
    mags.push_back(mag);
  }
}

}  // namespace

Vec eigenvalue_magnitudes(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("eigenvalue_magnitudes: matrix not square");
  const std::size_t n = m.rows();
  if (n == 0) throw InvalidInput("eigenvalue_magnitudes: empty matrix");
  if (n > 8) throw InvalidInput("eigenvalue_magnitudes: dimension exceeds 8");
  if (!m.all_finite()) throw InvalidInput("eigenvalue_magnitudes: non-finite entries");

  Vec mags;
  if (n == 1) {
    mags.push_back(std::abs(m(0, 0)));
    return mags;
  }

  Matrix h = m;
  hessenberg(h);
  const double eps = std::numeric_limits<double>::epsilon();
  const double tiny = 1e-300;

  std::size_t hi = n - 1;
  int iter = 0;
  while (true) {
    // Zero negligible subdiagonals.
    for (std::size_t i = 1; i <= hi; ++i) {
      if (std::abs(h(i, i - 1)) <= eps * (std::abs(h(i - 1, i - 1)) + std::abs(h(i, i))) + tiny)
        h(i, i - 1) = 0.0;
    }
    if (hi == 0) {
      mags.push_back(std::abs(h(0, 0)));
      break;
    }
    if (h(hi, hi - 1) == 0.0) {
      mags.push_back(std::abs(h(hi, hi)));
      --hi;
      iter = 0;
      continue;
    }
    if (hi == 1 || h(hi - 1, hi - 2) == 0.0) {
      push_block2_magnitudes(h, hi - 1, mags);
      if (hi == 1) break;
      hi -= 2;
      iter = 0;
      continue;
    }
    std::size_t lo = hi - 1;
    while (lo > 0 && h(lo, lo - 1) != 0.0) --lo;

    if (++iter > 200) throw InvalidInput("eigenvalue_magnitudes: QR iteration failed to converge");
    double s = h(hi - 1, hi - 1) + h(hi, hi);
    double t = h(hi - 1, hi - 1) * h(hi, hi) - h(hi - 1, hi) * h(hi, hi - 1);
    if (iter % 16 == 0) {
      // Exceptional shift to break symmetry-induced stalls.
      const double w = std::abs(h(hi, hi - 1)) + std::abs(h(hi - 1, hi - 2));
      s = h(hi, hi) + 1.5 * w;
      t = w * w;
    }
    francis_sweep(h, lo, hi, s, t);
  }

  std::sort(mags.begin(), mags.end(), std::greater<double>());
  return mags;
}

double spectral_radius(const Matrix& m) { return eigenvalue_magnitudes(m).front(); }

}  // namespace lvr
