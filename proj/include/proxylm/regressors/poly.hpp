#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "proxylm/error.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/standardize.hpp"

namespace proxylm {

struct PolyParams {
  int degree = 2;
  double alpha = 0.1;
  double l1_ratio = 0.9;
  int max_iterations = 1000;
  double tolerance = 1e-6;

  void validate() const {
    if (degree < 1 || degree > 3) throw Error(ErrorCode::invalid_argument, "PolyParams: degree must be 1, 2 or 3");
    if (alpha < 0.0) throw Error(ErrorCode::invalid_argument, "PolyParams: alpha must be >= 0");
    if (l1_ratio < 0.0 || l1_ratio > 1.0) throw Error(ErrorCode::invalid_argument, "PolyParams: l1_ratio must be in [0, 1]");
    if (max_iterations < 1) throw Error(ErrorCode::invalid_argument, "PolyParams: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw Error(ErrorCode::invalid_argument, "PolyParams: tolerance must be > 0");
  }
};

/// All monomials of total degree 1..degree over d variables. Ordered by degree,
/// then lexicographically by their nondecreasing variable-index tuples:
/// x0, x1, ..., x0*x0, x0*x1, ..., x1*x1, ...
inline std::vector<std::vector<int>> polynomial_terms(std::size_t d, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int start, int remaining) -> void {
    if (remaining == 0) {
      out.push_back(cur);
      return;
    }
    for (int j = start; j < static_cast<int>(d); ++j) {
      cur.push_back(j);
      self(self, j, remaining - 1);
      cur.pop_back();
    }
  };
  for (int k = 1; k <= degree; ++k) rec(rec, 0, k);
  return out;
}

inline std::vector<double> expand_row(const std::vector<double>& x, const std::vector<std::vector<int>>& terms) {
  std::vector<double> out(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    double v = 1.0;
    for (int j : terms[t]) v *= x[static_cast<std::size_t>(j)];
    out[t] = v;
  }
  return out;
}

struct PolyModel {
  PolyParams params;
  double intercept = 0.0;
  std::vector<double> coefficients;  // one per polynomial_terms(d, degree) entry
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::string schema_fingerprint;
  bool converged = true;
  int iterations = 0;
  std::vector<double> objective_history;  // objective after each sweep

  double predict_row(const DesignMatrix& m, std::size_t i) const {
    return predict_row(m, i, polynomial_terms(m.d(), params.degree));
  }

  double predict_row(const DesignMatrix& m, std::size_t i, const std::vector<std::vector<int>>& terms) const {
    const auto z = expand_row(standardizer.transform(m, i), terms);
    double y = intercept;
    for (std::size_t t = 0; t < z.size(); ++t) y += coefficients[t] * z[t];
    return y;
  }
};

/// Objective (1/2n)||r||^2 + alpha * (l1 ||b||_1 + (1 - l1)/2 ||b||_2^2).
inline double elastic_net_objective(const std::vector<double>& residual, const std::vector<double>& beta,
                                    const PolyParams& p) {
  double rss = 0.0;
  for (double r : residual) rss += r * r;
  double l1 = 0.0, l2 = 0.0;
  for (double b : beta) {
    l1 += std::abs(b);
    l2 += b * b;
  }
  return rss / (2.0 * static_cast<double>(residual.size())) +
         p.alpha * (p.l1_ratio * l1 + 0.5 * (1.0 - p.l1_ratio) * l2);
}

/// Elastic-net polynomial regression by cyclic coordinate descent on the
/// standardized, expanded features. The intercept is unpenalized (handled by
/// centering). A fit that hits max_iterations is returned with converged=false.
inline PolyModel poly_fit(const DesignMatrix& m, const PolyParams& params) {
  params.validate();
  if (m.n == 0) throw Error(ErrorCode::empty_training_set, "cannot fit polynomial regression on zero rows");

  PolyModel model;
  model.params = params;
  model.feature_names = m.schema.names();
  model.schema_fingerprint = m.schema.fingerprint();
  model.standardizer = Standardizer::fit(m);

  const auto n = m.n;
  const auto terms = polynomial_terms(m.d(), params.degree);
  const auto p = terms.size();
  const double dn = static_cast<double>(n);

  // Column-major centered design.
  std::vector<double> x(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = expand_row(model.standardizer.transform(m, i), terms);
    for (std::size_t t = 0; t < p; ++t) x[t * n + i] = z[t];
  }
  std::vector<double> col_mean(p, 0.0), col_sq(p, 0.0);
  for (std::size_t t = 0; t < p; ++t) {
    double* col = &x[t * n];
    col_mean[t] = std::accumulate(col, col + n, 0.0) / dn;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] -= col_mean[t];
      col_sq[t] += col[i] * col[i];
    }
    col_sq[t] /= dn;
  }
  const double y_mean = std::accumulate(m.targets.begin(), m.targets.end(), 0.0) / dn;
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = m.targets[i] - y_mean;

  std::vector<double> beta(p, 0.0);
  const double l1 = params.alpha * params.l1_ratio;
  const double l2 = params.alpha * (1.0 - params.l1_ratio);
  model.converged = false;
  for (int sweep = 1; sweep <= params.max_iterations; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t t = 0; t < p; ++t) {
      if (col_sq[t] <= 1e-14) continue;
      const double* col = &x[t * n];
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += col[i] * residual[i];
      rho = rho / dn + col_sq[t] * beta[t];
      double updated = 0.0;
      if (rho > l1) updated = (rho - l1) / (col_sq[t] + l2);
      else if (rho < -l1) updated = (rho + l1) / (col_sq[t] + l2);
      const double delta = updated - beta[t];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) residual[i] -= col[i] * delta;
        beta[t] = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    model.iterations = sweep;
    model.objective_history.push_back(elastic_net_objective(residual, beta, params));
    if (max_delta < params.tolerance) {
      model.converged = true;
      break;
    }
  }

  model.coefficients = beta;
  model.intercept = y_mean;
  for (std::size_t t = 0; t < p; ++t) model.intercept -= col_mean[t] * beta[t];
  return model;
}

inline std::vector<double> poly_predict(const PolyModel& model, const DesignMatrix& m) {
  if (m.schema.fingerprint() != model.schema_fingerprint)
    throw Error(ErrorCode::schema_mismatch, "matrix schema does not match polynomial model");
  const auto terms = polynomial_terms(m.d(), model.params.degree);
  std::vector<double> out(m.n);
  for (std::size_t i = 0; i < m.n; ++i) out[i] = model.predict_row(m, i, terms);
  return out;
}

}  // namespace proxylm
