#ifndef RELAYLAB_PCA_HPP
#define RELAYLAB_PCA_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relaylab/coverage.hpp"

namespace relaylab {

namespace linalg {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n*n).
// Returns eigenvalues; `vectors` receives eigenvectors as columns.
inline std::vector<double> jacobi_eigen(std::vector<double> a, int n,
                                        std::vector<double>& vectors) {
  vectors.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vectors[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto A = [&](int r, int c) -> double& {
    return a[static_cast<std::size_t>(r) * n + c];
  };
  auto V = [&](int r, int c) -> double& {
    return vectors[static_cast<std::size_t>(r) * n + c];
  };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-24 * n * n) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = A(i, i);
  return eig;
}

}  // namespace linalg

struct PcaScores {
  std::vector<double> scores;
};

// Orthonormal basis of the leading coverage-map variance directions.
struct PcaModel {
  int input_dim = 0;
  int width_cells = 0;
  int height_cells = 0;
  double cell_size = 0.0;
  std::vector<double> mean;         // length input_dim
  std::vector<double> components;   // n_components rows of input_dim
  std::vector<double> eigenvalues;  // descending, length n_components
  int k = 0;                        // retained component count
  double variance_target = 1.0;

  int n_components() const { return static_cast<int>(eigenvalues.size()); }

  const double* component(int i) const {
    return components.data() + static_cast<std::size_t>(i) * input_dim;
  }
};

// Fits the covariance eigenbasis of a batch of equal-shaped maps. Uses the
// d x d covariance when the flattened dimension is small, otherwise the
// n x n Gram dual (identical nonzero spectrum).
inline PcaModel fit_pca(const std::vector<CoverageMap>& maps,
                        double variance_target) {
  if (maps.size() < 2)
    throw std::invalid_argument("fit_pca: need at least 2 maps");
  if (!(variance_target > 0.0 && variance_target <= 1.0))
    throw std::invalid_argument("fit_pca: variance_target in (0,1]");
  const int w = maps[0].width_cells, h = maps[0].height_cells;
  const int d = w * h;
  const int n = static_cast<int>(maps.size());
  for (const auto& m : maps) {
    if (m.width_cells != w || m.height_cells != h)
      throw std::invalid_argument("fit_pca: map shape mismatch");
    for (double v : m.values)
      if (!std::isfinite(v))
        throw std::invalid_argument("fit_pca: non-finite cell");
  }

  PcaModel model;
  model.input_dim = d;
  model.width_cells = w;
  model.height_cells = h;
  model.cell_size = maps[0].cell_size;
  model.variance_target = variance_target;

  model.mean.assign(d, 0.0);
  for (const auto& m : maps)
    for (int i = 0; i < d; ++i) model.mean[i] += m.values[i];
  for (double& v : model.mean) v /= n;

  // centered data X, n rows of d
  std::vector<double> X(static_cast<std::size_t>(n) * d);
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < d; ++i)
      X[static_cast<std::size_t>(r) * d + i] = maps[r].values[i] - model.mean[i];

  std::vector<double> eig;
  std::vector<double> raw_components;  // rows of length d, unordered
  if (d <= n) {
    // direct covariance X^T X / (n-1)
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < n; ++r) {
      const double* row = X.data() + static_cast<std::size_t>(r) * d;
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j)
          cov[static_cast<std::size_t>(i) * d + j] += row[i] * row[j];
    }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        cov[static_cast<std::size_t>(i) * d + j] /= (n - 1);
        cov[static_cast<std::size_t>(j) * d + i] =
            cov[static_cast<std::size_t>(i) * d + j];
      }
    std::vector<double> vecs;
    eig = linalg::jacobi_eigen(std::move(cov), d, vecs);
    raw_components.resize(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)  // column i -> row i
      for (int j = 0; j < d; ++j)
        raw_components[static_cast<std::size_t>(i) * d + j] =
            vecs[static_cast<std::size_t>(j) * d + i];
  } else {
    // Gram dual: X X^T / (n-1); v = X^T u / sqrt((n-1) * eig)
    std::vector<double> gram(static_cast<std::size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r)
      for (int s = r; s < n; ++s) {
        double dot = 0.0;
        const double* xr = X.data() + static_cast<std::size_t>(r) * d;
        const double* xs = X.data() + static_cast<std::size_t>(s) * d;
        for (int i = 0; i < d; ++i) dot += xr[i] * xs[i];
        gram[static_cast<std::size_t>(r) * n + s] = dot / (n - 1);
        gram[static_cast<std::size_t>(s) * n + r] = dot / (n - 1);
      }
    std::vector<double> vecs;
    eig = linalg::jacobi_eigen(std::move(gram), n, vecs);
    raw_components.assign(static_cast<std::size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      if (eig[i] <= 0.0) continue;
      const double scale = 1.0 / std::sqrt((n - 1) * eig[i]);
      double* out = raw_components.data() + static_cast<std::size_t>(i) * d;
      for (int r = 0; r < n; ++r) {
        const double u = vecs[static_cast<std::size_t>(r) * n + i] * scale;
        const double* xr = X.data() + static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) out[j] += u * xr[j];
      }
    }
  }

  // order by descending eigenvalue, clamp noise-level values to zero
  const int m_all = static_cast<int>(eig.size());
  std::vector<int> order(m_all);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return eig[a] > eig[b]; });
  const double eig_max = eig.empty() ? 0.0 : std::max(0.0, eig[order[0]]);
  const double floor = eig_max * 1e-12;

  for (int idx : order) {
    double value = eig[idx];
    if (value < -1e-10 * std::max(1.0, eig_max)) value = 0.0;
    if (value <= floor) value = 0.0;
    if (value == 0.0) continue;  // keep only the numerical rank
    model.eigenvalues.push_back(value);
    const double* src = raw_components.data() + static_cast<std::size_t>(idx) * d;
    // sign convention: largest-magnitude entry nonnegative
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(src[j]) > std::abs(src[arg])) arg = j;
    const double sign = src[arg] < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < d; ++j) model.components.push_back(sign * src[j]);
  }

  const double total =
      std::accumulate(model.eigenvalues.begin(), model.eigenvalues.end(), 0.0);
  double cum = 0.0;
  model.k = model.n_components();
  for (int i = 0; i < model.n_components(); ++i) {
    cum += model.eigenvalues[i];
    if (cum / total >= variance_target) {
      model.k = i + 1;
      break;
    }
  }
  return model;
}

inline PcaScores project(const PcaModel& model, const CoverageMap& map) {
  if (map.width_cells * map.height_cells != model.input_dim)
    throw std::invalid_argument("project: map shape mismatch");
  PcaScores s;
  s.scores.resize(model.k);
  for (int i = 0; i < model.k; ++i) {
    const double* v = model.component(i);
    double dot = 0.0;
    for (int j = 0; j < model.input_dim; ++j)
      dot += v[j] * (map.values[j] - model.mean[j]);
    s.scores[i] = dot;
  }
  return s;
}

inline CoverageMap reconstruct(const PcaModel& model, const PcaScores& scores) {
  if (static_cast<int>(scores.scores.size()) != model.k)
    throw std::invalid_argument("reconstruct: score length mismatch");
  CoverageMap m;
  m.width_cells = model.width_cells;
  m.height_cells = model.height_cells;
  m.cell_size = model.cell_size;
  m.values = model.mean;
  for (int i = 0; i < model.k; ++i) {
    const double* v = model.component(i);
    for (int j = 0; j < model.input_dim; ++j)
      m.values[j] += scores.scores[i] * v[j];
  }
  return m;
}

// Cumulative explained-variance ratios over the nonzero spectrum.
inline std::vector<std::pair<int, double>> explained_variance_curve(
    const PcaModel& model) {
  const double total =
      std::accumulate(model.eigenvalues.begin(), model.eigenvalues.end(), 0.0);
  std::vector<std::pair<int, double>> curve;
  double cum = 0.0;
  for (int i = 0; i < model.n_components(); ++i) {
    cum += model.eigenvalues[i];
    curve.emplace_back(i + 1, cum / total);
  }
  return curve;
}

inline void save_pca(const PcaModel& m, std::ostream& out) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "pca %d %d %.17g\n", m.input_dim, m.k,
                m.variance_target);
  out << buf;
  std::snprintf(buf, sizeof buf, "shape %d %d %.17g %d\n", m.width_cells,
                m.height_cells, m.cell_size, m.n_components());
  out << buf;
  auto dump = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out << buf << (i + 1 < v.size() ? " " : "\n");
    }
  };
  dump(m.mean);
  dump(m.eigenvalues);
  for (int i = 0; i < m.n_components(); ++i)
    dump({m.component(i), m.component(i) + m.input_dim});
}

inline PcaModel load_pca(std::istream& in) {
  PcaModel m;
  std::string tag;
  int n_comp = 0;
  if (!(in >> tag >> m.input_dim >> m.k >> m.variance_target) || tag != "pca")
    throw std::runtime_error("load_pca: malformed header");
  if (!(in >> tag >> m.width_cells >> m.height_cells >> m.cell_size >>
        n_comp) ||
      tag != "shape")
    throw std::runtime_error("load_pca: malformed shape line");
  auto read_n = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v)
      if (!(in >> x)) throw std::runtime_error("load_pca: truncated data");
  };
  read_n(m.mean, m.input_dim);
  read_n(m.eigenvalues, n_comp);
  read_n(m.components, static_cast<std::size_t>(n_comp) * m.input_dim);
  return m;
}

}  // namespace relaylab

#endif  // RELAYLAB_PCA_HPP
