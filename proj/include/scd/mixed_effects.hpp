#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scd/io.hpp"

namespace scd::lmm {

enum class Transform { identity, log1p };

struct FixedTerm {
  enum class Kind { categorical, numeric };
  Kind kind = Kind::numeric;
  std::string name;
  std::string reference_level;      // categorical only
  std::vector<std::string> levels;  // optional declared level set; observed levels otherwise
  Transform transform = Transform::identity;
};

struct RegressionSpec {
  std::string name;
  std::string response;
  std::vector<FixedTerm> fixed;
  std::string grouping;
  std::size_t min_group_size = 31;
  std::map<std::string, std::string> filter;  // keep rows whose fields equal these strings
  std::map<std::string, std::string> labels;  // column name -> display label

  static RegressionSpec from_json(const json& j);
  [[nodiscard]] ordered_json to_json() const;
};

struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<int> group_index;
  std::vector<std::string> column_names;  // "Intercept", "term[level]", "term"
  std::vector<std::string> group_labels;
  std::size_t n_groups() const { return group_labels.size(); }
};

inline constexpr const char* kPooledGroup = "__pooled__";

struct GroupPooling {
  std::vector<int> mapping;  // old group -> new group
  std::size_t n_groups = 0;
  bool pooled = false;  // last new group is the pooled one
};

/// Groups of size >= min_group_size keep their relative order; the rest are
/// merged into one pooled group placed last.
GroupPooling pool_small_groups(std::span<const std::size_t> group_sizes, std::size_t min_group_size);

/// True when the row passes the regression filter.
bool row_selected(const json& row, const RegressionSpec& spec);

/// Treatment coding against each categorical's reference level, intercept
/// first, log1p as ln(1 + x), small groups pooled. Throws ValidationError for
/// a missing field, an undeclared level, a missing reference level, or rank
/// deficiency (naming the collinear columns).
DesignMatrix build_design(std::span<const json> rows, const RegressionSpec& spec);

struct FitOptions {
  double log_lambda_lo = -12.0;
  double log_lambda_hi = 12.0;
  double tol = 1e-8;
  int max_iter = 200;
  std::size_t grid_points = 49;  // coarse scan that seeds the golden-section bracket
};

struct LmmFit {
  std::vector<std::string> names;
  std::vector<double> beta;
  std::vector<double> se;
  std::vector<double> z;
  std::vector<double> p_values;
  std::vector<std::pair<double, double>> ci95;
  double sigma2_resid = 0.0;
  double sigma2_group = 0.0;
  double sigma2_group_se = 0.0;
  double lambda = 0.0;
  double reml_loglik = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
  std::size_t group_min = 0;
  std::size_t group_max = 0;
  double group_mean = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string diagnostics;
};

/// Sufficient statistics of a design for the profiled REML criterion.
class RemlProblem {
 public:
  explicit RemlProblem(const DesignMatrix& d);

  struct Eval {
    double loglik = 0.0;
    double dloglik_dlambda = 0.0;
    double sigma2 = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd xhx;  // X' H^-1 X
  };

  /// Profiled REML log-likelihood at variance ratio lambda >= 0.
  [[nodiscard]] Eval evaluate(double lambda) const;

  /// Non-profiled REML log-likelihood in (sigma2, sigma2_group).
  [[nodiscard]] double loglik(double sigma2, double sigma2_group) const;

  [[nodiscard]] std::size_t n() const { return n_; }
  [[nodiscard]] std::size_t p() const { return p_; }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  double yty_ = 0.0;
  std::vector<double> ng_;
  std::vector<Eigen::VectorXd> sg_;
  std::vector<double> tg_;
};

/// Golden-section search over ln(lambda), polished on the analytic derivative.
/// Throws ValidationError when n <= p + 1.
LmmFit fit_reml(const DesignMatrix& design, const FitOptions& options = {});

/// Two-sided standard normal p-value.
double normal_p_value(double z);

enum class TableFormat { text, csv };

void emit_regression_table(std::ostream& out, const LmmFit& fit, const RegressionSpec& spec, TableFormat format);

struct CoefRow {
  std::string term;
  double coef = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  double p = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Parses the coefficient rows of the CSV form.
std::vector<CoefRow> parse_regression_csv(std::istream& in);

struct ForestDatum {
  std::string term;
  double beta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Every coefficient except the intercept.
std::vector<ForestDatum> forest_data(const LmmFit& fit, const RegressionSpec& spec);

/// Writes `<stem>.svg` and `<stem>.csv` (term,beta,ci_low,ci_high,excludes_zero).
/// Throws ValidationError for no data or ci_low > beta > ci_high.
void emit_forest_plot(std::span<const ForestDatum> data, const std::filesystem::path& stem,
                      const std::string& title = {});

std::string render_forest_svg(std::span<const ForestDatum> data, const std::string& title);

}  // namespace scd::lmm
