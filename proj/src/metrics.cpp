#include "icevae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>
#include <numeric>

#include "icevae/errors.hpp"

namespace icevae::eval {

double ate_error(double tau_true, double tau_hat) {
  if (!std::isfinite(tau_true) || !std::isfinite(tau_hat)) throw DomainError("ate_error needs finite inputs");
  const double d = tau_true - tau_hat;
  return d * d;
}

double pehe(std::span<const double> tau_true, std::span<const double> tau_hat) {
  if (tau_true.size() != tau_hat.size()) throw UsageError("pehe: vectors differ in length");
  if (tau_true.empty()) throw UsageError("pehe: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < tau_true.size(); ++i) {
    const double d = tau_true[i] - tau_hat[i];
    sum += d * d;
  }
  return sum / static_cast<double>(tau_true.size());
}

std::vector<double> ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> r(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

namespace {

std::vector<double> column(const Tensor& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

// Centered, unit-norm copy; throws for a constant column.
std::vector<double> normalized(std::vector<double> v, const char* which, std::size_t c) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double& x : v) {
    x -= mean;
    ss += x * x;
  }
  if (!(ss > 0.0)) {
    throw DomainError(std::string("correlation undefined: ") + which + " column " + std::to_string(c) + " is constant");
  }
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
  return v;
}

std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& weight) {
  // Minimizes cost = -weight with the classic potentials formulation.
  const std::size_t n = weight.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weight[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

std::vector<std::size_t> greedy(const std::vector<std::vector<double>>& weight) {
  const std::size_t n = weight.size();
  std::vector<std::tuple<double, std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cells.emplace_back(-weight[i][j], i, j);
  }
  std::sort(cells.begin(), cells.end());
  std::vector<std::size_t> assignment(n, n);
  std::vector<bool> taken(n, false);
  for (const auto& [w, i, j] : cells) {
    if (assignment[i] != n || taken[j]) continue;
    assignment[i] = j;
    taken[j] = true;
  }
  return assignment;
}

}  // namespace

std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& weight) {
  for (const auto& row : weight) {
    if (row.size() != weight.size()) throw DimensionError("assignment needs a square matrix");
  }
  return weight.size() <= 20 ? hungarian(weight) : greedy(weight);
}

MccResult mcc(const Tensor& z_true, const Tensor& z_hat, Correlation flavor) {
  if (z_true.rank() != 2 || !z_true.same_shape(z_hat)) throw DimensionError("mcc needs two matrices of equal shape");
  const std::size_t n = z_true.rows(), d = z_true.cols();
  if (n < 3) throw UsageError("mcc needs at least 3 rows");

  auto prepare = [&](const Tensor& m, const char* which) {
    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> v = column(m, c);
      if (flavor == Correlation::spearman) v = ranks(v);
      cols.push_back(normalized(std::move(v), which, c));
    }
    return cols;
  };
  const auto a = prepare(z_true, "true");
  const auto b = prepare(z_hat, "estimated");

  MccResult res;
  res.abs_corr.assign(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < n; ++r) dot += a[i][r] * b[j][r];
      res.abs_corr[i][j] = std::min(1.0, std::abs(dot));
    }
  }
  res.assignment = max_weight_assignment(res.abs_corr);
  for (std::size_t i = 0; i < d; ++i) res.matched.push_back(res.abs_corr[i][res.assignment[i]]);
  res.score = std::accumulate(res.matched.begin(), res.matched.end(), 0.0) / static_cast<double>(d);
  return res;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw UsageError("summarize: no values");
  // Sorted accumulation keeps the result independent of input order.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  Summary s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

MetricsReport aggregate(std::string method, std::string scenario, std::span<const ReplicationResult> results) {
  if (results.empty()) throw UsageError("aggregate needs at least one replication");
  MetricsReport rep;
  rep.method = std::move(method);
  rep.scenario = std::move(scenario);
  const bool has_pehe = results.front().pehe.has_value();
  const bool has_mcc = results.front().mcc.has_value();
  for (const auto& r : results) {
    if (r.pehe.has_value() != has_pehe || r.mcc.has_value() != has_mcc) {
      throw UsageError("replications disagree on which metrics are present");
    }
    rep.seeds.push_back(r.seed);
    rep.ate_errors.push_back(r.ate_error);
    if (has_pehe) rep.pehes.push_back(*r.pehe);
    if (has_mcc) rep.mccs.push_back(*r.mcc);
  }
  rep.ate = summarize(rep.ate_errors);
  if (has_pehe) rep.pehe = summarize(rep.pehes);
  if (has_mcc) rep.mcc = summarize(rep.mccs);
  return rep;
}

namespace {

nlohmann::ordered_json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["scenario"] = scenario;
  j["seeds"] = seeds;
  j["ate_error"] = {{"values", ate_errors}, {"summary", summary_json(ate)}};
  j["pehe"] = pehe ? nlohmann::ordered_json{{"values", pehes}, {"summary", summary_json(*pehe)}} : nullptr;
  j["mcc"] = mcc ? nlohmann::ordered_json{{"values", mccs}, {"summary", summary_json(*mcc)}} : nullptr;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  try {
    std::vector<ReplicationResult> results;
    const auto seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const auto ate = j.at("ate_error").at("values").get<std::vector<double>>();
    std::vector<double> pe, mc;
    if (!j.at("pehe").is_null()) pe = j.at("pehe").at("values").get<std::vector<double>>();
    if (!j.at("mcc").is_null()) mc = j.at("mcc").at("values").get<std::vector<double>>();
    if (ate.size() != seeds.size() || (!pe.empty() && pe.size() != seeds.size()) ||
        (!mc.empty() && mc.size() != seeds.size())) {
      throw ParseError("metrics report: list lengths differ");
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      ReplicationResult r;
      r.seed = seeds[i];
      r.ate_error = ate[i];
      if (!pe.empty()) r.pehe = pe[i];
      if (!mc.empty()) r.mcc = mc[i];
      results.push_back(r);
    }
    return aggregate(j.at("method").get<std::string>(), j.at("scenario").get<std::string>(), results);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
}

void scatter_export(const Tensor& z_true, const Tensor& z_hat, const MccResult& result, const std::string& path) {
  if (!z_true.same_shape(z_hat)) throw DimensionError("scatter_export: shape mismatch");
  const std::size_t d = z_true.cols();
  if (result.assignment.size() != d) throw DimensionError("scatter_export: assignment does not match d_z");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "true_dim,est_dim,true_value,est_value,matched\n";
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const int matched = result.assignment[i] == j ? 1 : 0;
      for (std::size_t r = 0; r < z_true.rows(); ++r) {
        out << i << ',' << j << ',' << z_true(r, i) << ',' << z_hat(r, j) << ',' << matched << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace icevae::eval
