// Straight-line scalar reference implementations. Plain loops over std::vector, no Eigen.
#ifndef APEX_TESTS_ORACLES_HPP
#define APEX_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "apex/manifold.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;          // rows
using ClassProtos = std::vector<Mat>;  // [class][k] -> vector

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

inline double lse(const Vec& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline Vec to_vec(const apex::Vector& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec row(const apex::Matrix& m, Eigen::Index i) {
  Vec out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = m(i, j);
  return out;
}

inline Mat to_mat(const apex::Matrix& m) {
  Mat out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(row(m, i));
  return out;
}

inline ClassProtos protos_of(const apex::PrototypeManifold& m) {
  ClassProtos out;
  for (int c = 0; c < m.class_count(); ++c) out.push_back(to_mat(m.prototypes(c)));
  return out;
}

// Posterior: P(c|z) = sum_k w_k^c exp(p_k^c.z / tau) / sum_c' sum_k w_k^c' exp(p_k^c'.z / tau)
inline Vec posterior(const Vec& z, const ClassProtos& p, const Mat& w, double tau) {
  Vec logits;
  for (std::size_t c = 0; c < p.size(); ++c) {
    Vec terms;
    for (std::size_t k = 0; k < p[c].size(); ++k) terms.push_back(std::log(w[c][k]) + dot(p[c][k], z) / tau);
    logits.push_back(lse(terms));
  }
  const double total = lse(logits);
  Vec out;
  for (double l : logits) out.push_back(std::exp(l - total));
  return out;
}

// Mean negative log posterior of the true class.
inline double mle(const Mat& z, const std::vector<int>& y, const ClassProtos& p, const std::vector<Mat>& w,
                  double tau) {
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    Vec logits;
    for (std::size_t c = 0; c < p.size(); ++c) {
      Vec terms;
      for (std::size_t k = 0; k < p[c].size(); ++k) terms.push_back(std::log(w[i][c][k]) + dot(p[c][k], z[i]) / tau);
      logits.push_back(lse(terms));
    }
    s += -(logits[y[i]] - lse(logits));
  }
  return s / static_cast<double>(z.size());
}

// Prototype contrast, with D = exp(1/tau_p) for singleton classes.
inline double pc(const ClassProtos& p, double tau_p) {
  double s = 0;
  int m = 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    for (std::size_t j = 0; j < p[c].size(); ++j) {
      Vec intra, inter;
      for (std::size_t k = 0; k < p[c].size(); ++k) {
        if (k != j) intra.push_back(dot(p[c][j], p[c][k]) / tau_p);
      }
      if (intra.empty()) intra.push_back(1.0 / tau_p);
      for (std::size_t c2 = 0; c2 < p.size(); ++c2) {
        if (c2 == c) continue;
        for (const auto& q : p[c2]) inter.push_back(dot(p[c][j], q) / tau_p);
      }
      s += -(lse(intra) - lse(inter));
      ++m;
    }
  }
  return s / m;
}

// Hard assignment of class-c samples to their nearest own-class prototype (first index on ties).
inline std::vector<std::vector<int>> assign(const Mat& z, const std::vector<int>& y, const ClassProtos& p, int c) {
  std::vector<std::vector<int>> out(p[c].size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (y[i] != c) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < p[c].size(); ++k) {
      if (cosine(p[c][k], z[i]) > cosine(p[c][best], z[i])) best = k;
    }
    out[best].push_back(static_cast<int>(i));
  }
  return out;
}

// Cohesion, zero when nothing is assigned.
inline double cohesion(const Mat& z, const std::vector<int>& y, const ClassProtos& p, int c, int k) {
  const auto groups = assign(z, y, p, c);
  if (groups[k].empty()) return 0;
  double s = 0;
  for (int i : groups[k]) s += cosine(p[c][k], z[i]);
  return s / groups[k].size();
}

// Separation: 1 - max cosine to another class.
inline double separation(const ClassProtos& p, int c, int k) {
  double best = -2;
  for (std::size_t c2 = 0; c2 < p.size(); ++c2) {
    if (static_cast<int>(c2) == c) continue;
    for (const auto& q : p[c2]) best = std::max(best, cosine(p[c][k], q));
  }
  return 1 - best;
}

// Energy.
inline double energy(double q) { return -q; }

// Gibbs weights over prototypes.
inline Vec gibbs(const Vec& q, double tau_q) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : q) m = std::max(m, -energy(x) / tau_q);
  double s = 0;
  for (double x : q) s += std::exp(-energy(x) / tau_q - m);
  Vec out;
  for (double x : q) out.push_back(std::exp(-energy(x) / tau_q - m) / s);
  return out;
}

// Confidence: tau_q * LSE(q / tau_q).
inline double conf(const Vec& q, double tau_q) {
  Vec scaled;
  for (double x : q) scaled.push_back(x / tau_q);
  return tau_q * lse(scaled);
}

inline double mahalanobis(const Vec& h, const Vec& mu, const Mat& precision) {
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < h.size(); ++j) s += (h[i] - mu[i]) * precision[i][j] * (h[j] - mu[j]);
  }
  return s;
}

// PAOS with the 0.1 denominator floor.
inline double paos(const Vec& h, const Mat& means, const Mat& precision, const Vec& confs, double alpha) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < means.size(); ++c) {
    const double denom = std::max(0.1, 1 + alpha * confs[c]);
    best = std::min(best, mahalanobis(h, means[c], precision) / denom);
  }
  return best;
}

// Plain-exponential Sinkhorn: alternate u = a / (K v), v = b / (K^T u).
inline Mat sinkhorn(const Mat& s, double eps, const Vec& a, const Vec& b, double tol, int max_iters = 100000) {
  const std::size_t k = s.size(), n = s[0].size();
  Mat kern(k, Vec(n));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) kern[i][j] = std::exp(s[i][j] / eps);
  }
  Vec u(k, 1.0), v(n, 1.0);
  Mat w(k, Vec(n));
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      double t = 0;
      for (std::size_t j = 0; j < n; ++j) t += kern[i][j] * v[j];
      u[i] = a[i] / t;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double t = 0;
      for (std::size_t i = 0; i < k; ++i) t += kern[i][j] * u[i];
      v[j] = b[j] / t;
    }
    double resid = 0;
    for (std::size_t i = 0; i < k; ++i) {
      double r = 0;
      for (std::size_t j = 0; j < n; ++j) r += u[i] * kern[i][j] * v[j];
      resid = std::max(resid, std::abs(r - a[i]));
    }
    if (resid <= tol) break;
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i][j] = u[i] * kern[i][j] * v[j];
  }
  return w;
}

// Metrics with higher = more OOD.
inline double auroc(const Vec& id, const Vec& ood) {
  double s = 0;
  for (double o : ood) {
    for (double i : id) s += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  }
  return s / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

// Smallest cutoff t with #{id <= t} >= target * n; fraction of OOD <= t.
inline double fpr_at(const Vec& id, const Vec& ood, double target) {
  std::set<double> cuts(id.begin(), id.end());
  cuts.insert(ood.begin(), ood.end());
  for (double t : cuts) {
    double admitted = 0;
    for (double i : id) admitted += i <= t ? 1 : 0;
    if (admitted >= target * static_cast<double>(id.size()) - 1e-9) {
      double fp = 0;
      for (double o : ood) fp += o <= t ? 1 : 0;
      return fp / static_cast<double>(ood.size());
    }
  }
  return 1.0;
}

// Step-wise average precision, OOD positive, thresholds over unique scores from high to low.
inline double aupr(const Vec& id, const Vec& ood) {
  std::set<double, std::greater<>> cuts(id.begin(), id.end());
  cuts.insert(ood.begin(), ood.end());
  double area = 0, prev_recall = 0;
  for (double t : cuts) {
    double tp = 0, fp = 0;
    for (double o : ood) tp += o >= t ? 1 : 0;
    for (double i : id) fp += i >= t ? 1 : 0;
    const double recall = tp / static_cast<double>(ood.size());
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return area;
}

inline bool rel_close(double a, double b, double rel, double abs_floor = 1e-15) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

inline Vec random_unit(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Vec v(d);
  for (double& x : v) x = n(rng);
  const double s = norm(v);
  for (double& x : v) x /= s;
  return v;
}

inline Vec random_simplex(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vec v(k);
  double s = 0;
  for (double& x : v) s += (x = u(rng));
  for (double& x : v) x /= s;
  return v;
}

}  // namespace oracle

#endif  // APEX_TESTS_ORACLES_HPP
