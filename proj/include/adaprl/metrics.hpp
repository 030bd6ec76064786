#pragma once

#include <optional>
#include <string>
#include <vector>

namespace adaprl {

double mse(const std::vector<double>& pred, const std::vector<double>& target);
double mae(const std::vector<double>& pred, const std::vector<double>& target);

// Tie-corrected rank correlation (tau-b), computed by exhaustive pair
// enumeration. Rejects sequences shorter than 2 and fully-tied sequences
// (the tie correction would zero the denominator).
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

// 1 - sum(w * (y - pred)^2) / sum(w * y^2); the denominator is anchored at
// zero rather than the weighted mean. Rejects all-zero weights and all-zero
// targets. A constant-zero predictor scores exactly 0.
double weighted_r2(const std::vector<double>& pred, const std::vector<double>& target,
                   const std::vector<double>& weights);

// Rank correlation: Pearson correlation of average ranks. Rejects constant
// sequences.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  double kendall_tau = 0.0;
  std::optional<double> weighted_r2;             // present when the dataset carries weights
  std::optional<double> spearman_sigma_error;    // rank correlation of sigma vs |error|

  std::string to_json() const;                   // flat object, omits absent fields
  static MetricReport from_json(const std::string& text);
};

}  // namespace adaprl
