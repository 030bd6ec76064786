#include "adaprl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace adaprl {

namespace {

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_same_size(const char* op, std::size_t a, std::size_t b) {
  if (a != b) fail(op, "length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
  require_same_size("mse", pred.size(), target.size());
  if (pred.empty()) fail("mse", "empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double r = pred[i] - target[i];
    s += r * r;
  }
  return s / static_cast<double>(pred.size());
}

double mae(const std::vector<double>& pred, const std::vector<double>& target) {
  require_same_size("mae", pred.size(), target.size());
  if (pred.empty()) fail("mae", "empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  require_same_size("kendall_tau", a.size(), b.size());
  std::size_t n = a.size();
  if (n < 2) fail("kendall_tau", "need at least 2 observations, got " + std::to_string(n));
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0) ++ties_a;
      if (db == 0.0) ++ties_b;
      if (da == 0.0 || db == 0.0) continue;
      if ((da > 0.0) == (db > 0.0))
        ++concordant;
      else
        ++discordant;
    }
  long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  if (ties_a == n0) fail("kendall_tau", "first sequence is fully tied; tau is undefined under tie correction");
  if (ties_b == n0) fail("kendall_tau", "second sequence is fully tied; tau is undefined under tie correction");
  double denom = std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
  return static_cast<double>(concordant - discordant) / denom;
}

double weighted_r2(const std::vector<double>& pred, const std::vector<double>& target,
                   const std::vector<double>& weights) {
  require_same_size("weighted_r2", pred.size(), target.size());
  require_same_size("weighted_r2", pred.size(), weights.size());
  if (pred.empty()) fail("weighted_r2", "empty input");
  bool any_w = false, any_y = false;
  for (double w : weights)
    if (w != 0.0) any_w = true;
  for (double y : target)
    if (y != 0.0) any_y = true;
  if (!any_w) fail("weighted_r2", "all weights are zero");
  if (!any_y) fail("weighted_r2", "all targets are zero");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double r = target[i] - pred[i];
    num += weights[i] * r * r;
    den += weights[i] * target[i] * target[i];
  }
  return 1.0 - num / den;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require_same_size("spearman", a.size(), b.size());
  std::size_t n = a.size();
  if (n < 2) fail("spearman", "need at least 2 observations, got " + std::to_string(n));
  auto constant = [](const std::vector<double>& x) {
    for (double v : x)
      if (v != x[0]) return false;
    return true;
  };
  if (constant(a)) fail("spearman", "first sequence is constant; rank correlation is undefined");
  if (constant(b)) fail("spearman", "second sequence is constant; rank correlation is undefined");
  std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["mse"] = mse;
  j["mae"] = mae;
  j["kendall_tau"] = kendall_tau;
  if (weighted_r2) j["weighted_r2"] = *weighted_r2;
  if (spearman_sigma_error) j["spearman_sigma_error"] = *spearman_sigma_error;
  return j.dump();
}

MetricReport MetricReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MetricReport r;
  r.mse = j.at("mse").get<double>();
  r.mae = j.at("mae").get<double>();
  r.kendall_tau = j.at("kendall_tau").get<double>();
  if (j.contains("weighted_r2")) r.weighted_r2 = j["weighted_r2"].get<double>();
  if (j.contains("spearman_sigma_error")) r.spearman_sigma_error = j["spearman_sigma_error"].get<double>();
  return r;
}

}  // namespace adaprl
