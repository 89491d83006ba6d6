#include "scd/mixed_effects.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "scd/error.hpp"

namespace scd::lmm {

namespace {

Transform parse_transform(const std::string& s) {
  if (s == "identity") return Transform::identity;
  if (s == "log1p") return Transform::log1p;
  throw ValidationError("unknown transform \"" + s + "\"");
}

const char* to_string(Transform t) { return t == Transform::log1p ? "log1p" : "identity"; }

std::string value_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

const json& field_of(const json& row, const std::string& name, std::size_t row_no) {
  auto it = row.find(name);
  if (it == row.end() || it->is_null()) {
    throw ValidationError("row " + std::to_string(row_no) + ": missing field \"" + name + "\"");
  }
  return *it;
}

double numeric_of(const json& row, const std::string& name, std::size_t row_no) {
  const json& v = field_of(row, name, row_no);
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (!v.is_number()) throw ValidationError("row " + std::to_string(row_no) + ": field \"" + name + "\" is not numeric");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError("row " + std::to_string(row_no) + ": non-finite \"" + name + "\"");
  return x;
}

std::string display(const RegressionSpec& spec, const std::string& column) {
  auto it = spec.labels.find(column);
  return it == spec.labels.end() ? column : it->second;
}

}  // namespace

RegressionSpec RegressionSpec::from_json(const json& j) {
  RegressionSpec s;
  s.name = j.value("name", "");
  s.response = required<std::string>(j, "response");
  s.grouping = required<std::string>(j, "grouping");
  s.min_group_size = j.value("min_group_size", std::size_t{31});
  for (const auto& t : required<json>(j, "fixed")) {
    FixedTerm term;
    term.name = required<std::string>(t, "name");
    const std::string kind = t.value("kind", t.contains("reference_level") ? "categorical" : "numeric");
    if (kind == "categorical") {
      term.kind = FixedTerm::Kind::categorical;
      term.reference_level = required<std::string>(t, "reference_level");
      term.levels = t.value("levels", std::vector<std::string>{});
    } else if (kind == "numeric") {
      term.kind = FixedTerm::Kind::numeric;
      term.transform = parse_transform(t.value("transform", "identity"));
    } else {
      throw ValidationError("unknown term kind \"" + kind + "\"");
    }
    s.fixed.push_back(std::move(term));
  }
  if (j.contains("filter")) s.filter = j.at("filter").get<std::map<std::string, std::string>>();
  if (j.contains("labels")) s.labels = j.at("labels").get<std::map<std::string, std::string>>();
  return s;
}

ordered_json RegressionSpec::to_json() const {
  ordered_json j;
  j["name"] = name;
  j["response"] = response;
  j["grouping"] = grouping;
  j["min_group_size"] = min_group_size;
  j["fixed"] = ordered_json::array();
  for (const auto& t : fixed) {
    ordered_json tj;
    tj["name"] = t.name;
    if (t.kind == FixedTerm::Kind::categorical) {
      tj["kind"] = "categorical";
      tj["reference_level"] = t.reference_level;
      if (!t.levels.empty()) tj["levels"] = t.levels;
    } else {
      tj["kind"] = "numeric";
      tj["transform"] = to_string(t.transform);
    }
    j["fixed"].push_back(tj);
  }
  if (!filter.empty()) j["filter"] = filter;
  if (!labels.empty()) j["labels"] = labels;
  return j;
}

GroupPooling pool_small_groups(std::span<const std::size_t> group_sizes, std::size_t min_group_size) {
  GroupPooling g;
  g.mapping.assign(group_sizes.size(), -1);
  int next = 0;
  for (std::size_t i = 0; i < group_sizes.size(); ++i) {
    if (group_sizes[i] >= min_group_size) g.mapping[i] = next++;
  }
  for (std::size_t i = 0; i < group_sizes.size(); ++i) {
    if (g.mapping[i] < 0) {
      g.mapping[i] = next;
      g.pooled = true;
    }
  }
  g.n_groups = static_cast<std::size_t>(next) + (g.pooled ? 1 : 0);
  return g;
}

bool row_selected(const json& row, const RegressionSpec& spec) {
  for (const auto& [k, v] : spec.filter) {
    auto it = row.find(k);
    if (it == row.end() || value_string(*it) != v) return false;
  }
  return true;
}

DesignMatrix build_design(std::span<const json> all_rows, const RegressionSpec& spec) {
  std::vector<const json*> rows;
  for (const auto& r : all_rows) {
    if (row_selected(r, spec)) rows.push_back(&r);
  }
  if (rows.empty()) throw ValidationError("regression " + spec.name + ": no rows selected");
  const std::size_t n = rows.size();

  DesignMatrix d;
  d.column_names.push_back("Intercept");
  struct Coded {
    const FixedTerm* term;
    std::vector<std::string> dummies;  // non-reference levels, in column order
  };
  std::vector<Coded> coded;
  for (const auto& t : spec.fixed) {
    Coded c{&t, {}};
    if (t.kind == FixedTerm::Kind::categorical) {
      std::set<std::string> observed;
      for (std::size_t i = 0; i < n; ++i) observed.insert(value_string(field_of(*rows[i], t.name, i)));
      std::vector<std::string> levels = t.levels;
      if (levels.empty()) {
        levels.assign(observed.begin(), observed.end());
      } else {
        for (const auto& o : observed) {
          if (std::find(levels.begin(), levels.end(), o) == levels.end()) {
            throw ValidationError("term " + t.name + ": level \"" + o + "\" is not declared");
          }
        }
      }
      if (!observed.count(t.reference_level)) {
        throw ValidationError("term " + t.name + ": reference level \"" + t.reference_level + "\" not present in data");
      }
      for (const auto& l : levels) {
        if (l == t.reference_level) continue;
        c.dummies.push_back(l);
        d.column_names.push_back(t.name + "[" + l + "]");
      }
    } else {
      d.column_names.push_back(t.name);
    }
    coded.push_back(std::move(c));
  }

  const std::size_t p = d.column_names.size();
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(n));
  std::vector<std::string> group_raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = *rows[i];
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::Index col = 0;
    d.X(r, col++) = 1.0;
    for (const auto& c : coded) {
      if (c.term->kind == FixedTerm::Kind::categorical) {
        const std::string v = value_string(field_of(row, c.term->name, i));
        for (const auto& l : c.dummies) d.X(r, col++) = v == l ? 1.0 : 0.0;
      } else {
        double x = numeric_of(row, c.term->name, i);
        if (c.term->transform == Transform::log1p) {
          if (!(x > -1.0)) throw ValidationError("row " + std::to_string(i) + ": log1p of " + c.term->name + " <= -1");
          x = std::log1p(x);
        }
        d.X(r, col++) = x;
      }
    }
    d.y(r) = numeric_of(row, spec.response, i);
    group_raw[i] = value_string(field_of(row, spec.grouping, i));
  }

  // Rank check, column by column, so the offending columns can be named.
  std::vector<std::string> collinear;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p); ++j) {
    Eigen::MatrixXd sub(d.X.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = d.X.col(kept[k]);
    sub.col(sub.cols() - 1) = d.X.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() < sub.cols()) {
      collinear.push_back(d.column_names[static_cast<std::size_t>(j)]);
    } else {
      kept.push_back(j);
    }
  }
  if (!collinear.empty()) {
    std::string names;
    for (const auto& c : collinear) names += (names.empty() ? "" : ", ") + c;
    throw ValidationError("regression " + spec.name + ": design is rank deficient; collinear column(s): " + names);
  }

  std::vector<std::string> labels(group_raw);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<std::size_t> sizes(labels.size(), 0);
  std::vector<int> raw_index(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw_index[i] = static_cast<int>(std::lower_bound(labels.begin(), labels.end(), group_raw[i]) - labels.begin());
    ++sizes[static_cast<std::size_t>(raw_index[i])];
  }
  const auto pooling = pool_small_groups(sizes, spec.min_group_size);
  d.group_labels.assign(pooling.n_groups, kPooledGroup);
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (sizes[g] >= spec.min_group_size) d.group_labels[static_cast<std::size_t>(pooling.mapping[g])] = labels[g];
  }
  d.group_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.group_index[i] = pooling.mapping[static_cast<std::size_t>(raw_index[i])];
  return d;
}

// ---------------------------------------------------------------------------

RemlProblem::RemlProblem(const DesignMatrix& d)
    : n_(static_cast<std::size_t>(d.X.rows())), p_(static_cast<std::size_t>(d.X.cols())) {
  if (d.y.size() != d.X.rows() || d.group_index.size() != n_) throw std::invalid_argument("design size mismatch");
  xtx_ = d.X.transpose() * d.X;
  xty_ = d.X.transpose() * d.y;
  yty_ = d.y.squaredNorm();
  const std::size_t G = d.n_groups();
  ng_.assign(G, 0.0);
  sg_.assign(G, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_)));
  tg_.assign(G, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const int g = d.group_index[i];
    if (g < 0 || static_cast<std::size_t>(g) >= G) throw std::invalid_argument("group index out of range");
    const auto gi = static_cast<std::size_t>(g);
    ng_[gi] += 1.0;
    sg_[gi] += d.X.row(static_cast<Eigen::Index>(i)).transpose();
    tg_[gi] += d.y(static_cast<Eigen::Index>(i));
  }
  for (std::size_t g = 0; g < G; ++g) {
    if (ng_[g] == 0.0) throw ValidationError("empty group " + std::to_string(g));
  }
}

RemlProblem::Eval RemlProblem::evaluate(double lambda) const {
  Eval e;
  Eigen::MatrixXd M = xtx_;
  Eigen::VectorXd b = xty_;
  double q = yty_;
  double logdet_h = 0.0;
  for (std::size_t g = 0; g < ng_.size(); ++g) {
    const double c = lambda / (1.0 + lambda * ng_[g]);
    M.noalias() -= c * sg_[g] * sg_[g].transpose();
    b -= c * tg_[g] * sg_[g];
    q -= c * tg_[g] * tg_[g];
    logdet_h += std::log1p(lambda * ng_[g]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw RuntimeFailure("X'H^-1X is not positive definite");
  e.beta = llt.solve(b);
  const double Q = q - e.beta.dot(b);
  const double dof = static_cast<double>(n_ - p_);
  if (!(Q > 0.0)) throw ValidationError("residual quadratic form is not positive; response is fit exactly");
  e.sigma2 = Q / dof;
  double logdet_m = 0.0;
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet_m += 2.0 * std::log(L(i, i));
  e.loglik = -0.5 * (dof * (std::log(2.0 * std::numbers::pi * e.sigma2) + 1.0) + logdet_h + logdet_m);

  double a = 0.0, bsum = 0.0;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(M.rows(), M.cols());
  for (std::size_t g = 0; g < ng_.size(); ++g) {
    const double w = 1.0 / (1.0 + lambda * ng_[g]);
    const double eg = tg_[g] - sg_[g].dot(e.beta);
    a += eg * eg * w * w;
    bsum += ng_[g] * w;
    S.noalias() += (w * w) * sg_[g] * sg_[g].transpose();
  }
  const double c = llt.solve(S).trace();
  e.dloglik_dlambda = -0.5 * (-dof * a / Q + bsum - c);
  e.xhx = std::move(M);
  return e;
}

double RemlProblem::loglik(double sigma2, double sigma2_group) const {
  const double lambda = sigma2_group / sigma2;
  const Eval e = evaluate(lambda);
  const double dof = static_cast<double>(n_ - p_);
  const double Q = e.sigma2 * dof;
  double logdet_h = 0.0;
  for (double n : ng_) logdet_h += std::log1p(lambda * n);
  Eigen::LLT<Eigen::MatrixXd> llt(e.xhx);
  double logdet_m = 0.0;
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet_m += 2.0 * std::log(L(i, i));
  return -0.5 * (dof * std::log(2.0 * std::numbers::pi) + static_cast<double>(n_) * std::log(sigma2) + logdet_h +
                 logdet_m - static_cast<double>(p_) * std::log(sigma2) + Q / sigma2);
}

double normal_p_value(double z) { return std::erfc(std::fabs(z) / std::numbers::sqrt2); }

namespace {

double group_var_se(const RemlProblem& prob, double s2, double g2) {
  if (!(g2 > 0.0)) return std::nan("");
  const double hs = 1e-4 * s2;
  const double hg = 1e-4 * g2;
  auto f = [&](double a, double b) { return prob.loglik(a, b); };
  const double f0 = f(s2, g2);
  const double fss = (f(s2 + hs, g2) - 2.0 * f0 + f(s2 - hs, g2)) / (hs * hs);
  const double fgg = (f(s2, g2 + hg) - 2.0 * f0 + f(s2, g2 - hg)) / (hg * hg);
  const double fsg =
      (f(s2 + hs, g2 + hg) - f(s2 + hs, g2 - hg) - f(s2 - hs, g2 + hg) + f(s2 - hs, g2 - hg)) / (4.0 * hs * hg);
  // Inverse of the observed information [-fss -fsg; -fsg -fgg], entry (g, g).
  const double det = fss * fgg - fsg * fsg;
  if (!(det > 0.0) || !(fss < 0.0)) return std::nan("");
  const double var = -fss / det;
  return var > 0.0 ? std::sqrt(var) : std::nan("");
}

}  // namespace

LmmFit fit_reml(const DesignMatrix& design, const FitOptions& opt) {
  const RemlProblem prob(design);
  if (prob.n() <= prob.p() + 1) throw ValidationError("fit_reml: need more observations than coefficients + 1");
  if (!(opt.log_lambda_hi > opt.log_lambda_lo) || opt.grid_points < 3) {
    throw ValidationError("fit_reml: invalid search bracket");
  }

  LmmFit fit;
  auto ll = [&](double u) { return prob.evaluate(std::exp(u)).loglik; };

  const std::size_t K = opt.grid_points;
  const double step = (opt.log_lambda_hi - opt.log_lambda_lo) / static_cast<double>(K - 1);
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const double v = ll(opt.log_lambda_lo + static_cast<double>(k) * step);
    if (v > best_ll) {
      best_ll = v;
      best = k;
    }
  }
  double a = opt.log_lambda_lo + static_cast<double>(best == 0 ? 0 : best - 1) * step;
  double b = opt.log_lambda_lo + static_cast<double>(std::min(best + 1, K - 1)) * step;

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = ll(c), fd = ll(d);
  int it = 0;
  while (b - a > opt.tol && it < opt.max_iter) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = ll(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = ll(d);
    }
    ++it;
  }
  fit.iterations = it;
  fit.converged = b - a <= opt.tol;
  double u = fc >= fd ? c : d;

  // Polish on the sign change of d loglik / d ln(lambda) inside a widened bracket.
  auto grad = [&](double v) {
    const double lam = std::exp(v);
    return lam * prob.evaluate(lam).dloglik_dlambda;
  };
  {
    double lo = std::max(opt.log_lambda_lo, u - 1e-4);
    double hi = std::min(opt.log_lambda_hi, u + 1e-4);
    double glo = grad(lo), ghi = grad(hi);
    if (glo > 0.0 && ghi < 0.0) {
      for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(u)); ++k) {
        const double mid = 0.5 * (lo + hi);
        const double gm = grad(mid);
        if (gm == 0.0) {
          lo = hi = mid;
          break;
        }
        (gm > 0.0 ? lo : hi) = mid;
      }
      const double polished = 0.5 * (lo + hi);
      if (ll(polished) >= ll(u)) u = polished;
    }
  }

  double lambda = std::exp(u);
  const double edge = 1e-6;
  if (u - opt.log_lambda_lo < edge || prob.evaluate(0.0).loglik >= prob.evaluate(lambda).loglik) {
    lambda = 0.0;
  } else if (opt.log_lambda_hi - u < edge) {
    fit.converged = false;
    fit.diagnostics = "variance ratio at the upper end of the search bracket";
  }
  if (!fit.converged && fit.diagnostics.empty()) {
    fit.diagnostics = "golden-section search did not reach tolerance in " + std::to_string(opt.max_iter) + " steps";
  }

  const auto e = prob.evaluate(lambda);
  fit.lambda = lambda;
  fit.sigma2_resid = e.sigma2;
  fit.sigma2_group = lambda * e.sigma2;
  fit.reml_loglik = e.loglik;
  fit.sigma2_group_se = group_var_se(prob, fit.sigma2_resid, fit.sigma2_group);

  const Eigen::MatrixXd cov = e.sigma2 * e.xhx.llt().solve(Eigen::MatrixXd::Identity(e.xhx.rows(), e.xhx.cols()));
  fit.names = design.column_names;
  for (Eigen::Index j = 0; j < e.beta.size(); ++j) {
    const double bj = e.beta(j);
    const double se = std::sqrt(cov(j, j));
    fit.beta.push_back(bj);
    fit.se.push_back(se);
    fit.z.push_back(bj / se);
    fit.p_values.push_back(normal_p_value(bj / se));
    fit.ci95.emplace_back(bj - 1.96 * se, bj + 1.96 * se);
  }

  fit.n_obs = prob.n();
  fit.n_groups = design.n_groups();
  std::vector<std::size_t> sizes(fit.n_groups, 0);
  for (int g : design.group_index) ++sizes[static_cast<std::size_t>(g)];
  fit.group_min = *std::min_element(sizes.begin(), sizes.end());
  fit.group_max = *std::max_element(sizes.begin(), sizes.end());
  fit.group_mean = static_cast<double>(fit.n_obs) / static_cast<double>(fit.n_groups);
  return fit;
}

// ---------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string pad(const std::string& s, std::size_t w, bool right) {
  if (s.size() >= w) return s;
  return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

std::string opt_fixed(double v, int decimals) { return std::isfinite(v) ? format_fixed(v, decimals) : ""; }

}  // namespace

void emit_regression_table(std::ostream& out, const LmmFit& fit, const RegressionSpec& spec, TableFormat format) {
  if (format == TableFormat::csv) {
    out << "# model,MixedLM\n";
    out << "# dependent_variable," << csv_field(spec.response) << '\n';
    out << "# method,REML\n";
    out << "# n_obs," << fit.n_obs << '\n';
    out << "# n_groups," << fit.n_groups << '\n';
    out << "# scale," << format_double(fit.sigma2_resid) << '\n';
    out << "# log_likelihood," << format_double(fit.reml_loglik) << '\n';
    out << "# converged," << (fit.converged ? "yes" : "no") << '\n';
    out << "# min_group_size," << fit.group_min << '\n';
    out << "# max_group_size," << fit.group_max << '\n';
    out << "# mean_group_size," << format_double(fit.group_mean) << '\n';
    out << "term,coef,std_err,z,p,ci_low,ci_high\n";
    for (std::size_t j = 0; j < fit.beta.size(); ++j) {
      out << csv_field(display(spec, fit.names[j])) << ',' << format_double(fit.beta[j]) << ','
          << format_double(fit.se[j]) << ',' << format_double(fit.z[j]) << ',' << format_double(fit.p_values[j])
          << ',' << format_double(fit.ci95[j].first) << ',' << format_double(fit.ci95[j].second) << '\n';
    }
    out << "Group Var," << format_double(fit.sigma2_group) << ','
        << (std::isfinite(fit.sigma2_group_se) ? format_double(fit.sigma2_group_se) : "") << ",,,,\n";
    return;
  }

  const std::vector<std::pair<std::string, std::string>> left = {
      {"Model:", "MixedLM"},
      {"No. Observations:", std::to_string(fit.n_obs)},
      {"No. Groups:", std::to_string(fit.n_groups)},
      {"Min. group size:", std::to_string(fit.group_min)},
      {"Max. group size:", std::to_string(fit.group_max)},
      {"Mean group size:", format_fixed(fit.group_mean, 1)},
  };
  const std::vector<std::pair<std::string, std::string>> right = {
      {"Dependent Variable:", spec.response},
      {"Method:", "REML"},
      {"Scale:", format_fixed(fit.sigma2_resid, 4)},
      {"Log-Likelihood:", format_fixed(fit.reml_loglik, 4)},
      {"Converged:", fit.converged ? "Yes" : "No"},
      {"", ""},
  };
  std::size_t lv = 0;
  for (const auto& [k, v] : left) lv = std::max(lv, v.size());
  std::vector<std::string> header;
  for (std::size_t i = 0; i < left.size(); ++i) {
    std::string line = pad(left[i].first, 18, false) + pad(left[i].second, lv, false);
    if (!right[i].first.empty()) line += "  " + pad(right[i].first, 20, false) + right[i].second;
    while (!line.empty() && line.back() == ' ') line.pop_back();
    header.push_back(line);
  }

  std::vector<std::string> labels;
  for (const auto& n : fit.names) labels.push_back(display(spec, n));
  labels.push_back("Group Var");
  std::size_t lw = 0;
  for (const auto& l : labels) lw = std::max(lw, l.size());
  const std::vector<std::string> cols = {"Coef.", "Std.Err.", "z", "P>|z|", "[0.025", "0.975]"};
  const std::size_t cw = 9;
  const std::size_t width = lw + cols.size() * cw;

  std::size_t rule_w = width;
  for (const auto& h : header) rule_w = std::max(rule_w, h.size());
  const std::string rule(rule_w, '=');
  const std::string thin(rule_w, '-');
  out << rule << '\n';
  for (const auto& h : header) out << h << '\n';
  out << rule << '\n';
  std::string head = pad("", lw, false);
  for (const auto& c : cols) head += pad(c, cw, true);
  out << head << '\n' << thin << '\n';
  for (std::size_t j = 0; j < fit.beta.size(); ++j) {
    std::string line = pad(labels[j], lw, false);
    line += pad(format_fixed(fit.beta[j], 3), cw, true);
    line += pad(format_fixed(fit.se[j], 3), cw, true);
    line += pad(format_fixed(fit.z[j], 3), cw, true);
    line += pad(format_fixed(fit.p_values[j], 3), cw, true);
    line += pad(format_fixed(fit.ci95[j].first, 3), cw, true);
    line += pad(format_fixed(fit.ci95[j].second, 3), cw, true);
    out << line << '\n';
  }
  std::string gv = pad("Group Var", lw, false) + pad(format_fixed(fit.sigma2_group, 3), cw, true) +
                   pad(opt_fixed(fit.sigma2_group_se, 3), cw, true);
  while (!gv.empty() && gv.back() == ' ') gv.pop_back();
  out << gv << '\n' << rule << '\n';
}

std::vector<CoefRow> parse_regression_csv(std::istream& in) {
  std::vector<CoefRow> rows;
  std::string line;
  bool header_seen = false;
  auto num = [](const std::string& s) { return s.empty() ? std::nan("") : std::stod(s); };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "term,coef,std_err,z,p,ci_low,ci_high") throw ValidationError("unexpected regression CSV header");
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw ValidationError("regression CSV row with " + std::to_string(f.size()) + " fields");
    if (f[0] == "Group Var") continue;
    rows.push_back({f[0], num(f[1]), num(f[2]), num(f[3]), num(f[4]), num(f[5]), num(f[6])});
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<ForestDatum> forest_data(const LmmFit& fit, const RegressionSpec& spec) {
  std::vector<ForestDatum> out;
  for (std::size_t j = 0; j < fit.beta.size(); ++j) {
    if (fit.names[j] == "Intercept") continue;
    out.push_back({display(spec, fit.names[j]), fit.beta[j], fit.ci95[j].first, fit.ci95[j].second});
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_forest(std::span<const ForestDatum> data) {
  if (data.empty()) throw ValidationError("forest plot needs at least one coefficient");
  for (const auto& d : data) {
    if (!(d.ci_low <= d.beta && d.beta <= d.ci_high)) {
      throw ValidationError("forest datum " + d.term + ": beta outside its interval");
    }
  }
}

}  // namespace

std::string render_forest_svg(std::span<const ForestDatum> data, const std::string& title) {
  check_forest(data);
  double lo = 0.0, hi = 0.0;
  for (const auto& d : data) {
    lo = std::min(lo, d.ci_low);
    hi = std::max(hi, d.ci_high);
  }
  if (hi - lo <= 0.0) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double padv = 0.05 * (hi - lo);
  lo -= padv;
  hi += padv;

  const double label_w = 260.0, plot_w = 360.0, row_h = 28.0, top = title.empty() ? 20.0 : 44.0;
  const double x0 = label_w + 10.0;
  const double width = x0 + plot_w + 20.0;
  const double height = top + row_h * static_cast<double>(data.size()) + 50.0;
  auto X = [&](double v) { return format_fixed(x0 + (v - lo) / (hi - lo) * plot_w, 2); };
  auto Y = [&](std::size_t i) { return top + row_h * (static_cast<double>(i) + 0.5); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_fixed(width, 0) << "\" height=\""
    << format_fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    s << "<text x=\"" << format_fixed(width / 2.0, 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
  }
  const double axis_y = top + row_h * static_cast<double>(data.size());
  s << "<line x1=\"" << X(0.0) << "\" y1=\"" << format_fixed(top, 2) << "\" x2=\"" << X(0.0) << "\" y2=\""
    << format_fixed(axis_y, 2) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    const std::string y = format_fixed(Y(i), 2);
    const std::string y1 = format_fixed(Y(i) - 5.0, 2);
    const std::string y2 = format_fixed(Y(i) + 5.0, 2);
    s << "<text x=\"" << format_fixed(label_w, 2) << "\" y=\"" << format_fixed(Y(i) + 4.0, 2)
      << "\" text-anchor=\"end\">" << xml_escape(d.term) << "</text>\n";
    s << "<line x1=\"" << X(d.ci_low) << "\" y1=\"" << y << "\" x2=\"" << X(d.ci_high) << "\" y2=\"" << y
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << X(d.ci_low) << "\" y1=\"" << y1 << "\" x2=\"" << X(d.ci_low) << "\" y2=\"" << y2
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << X(d.ci_high) << "\" y1=\"" << y1 << "\" x2=\"" << X(d.ci_high) << "\" y2=\"" << y2
      << "\" stroke=\"black\"/>\n";
    s << "<circle cx=\"" << X(d.beta) << "\" cy=\"" << y << "\" r=\"4\" fill=\"black\"/>\n";
  }
  s << "<line x1=\"" << format_fixed(x0, 2) << "\" y1=\"" << format_fixed(axis_y, 2) << "\" x2=\""
    << format_fixed(x0 + plot_w, 2) << "\" y2=\"" << format_fixed(axis_y, 2) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    s << "<line x1=\"" << X(v) << "\" y1=\"" << format_fixed(axis_y, 2) << "\" x2=\"" << X(v) << "\" y2=\""
      << format_fixed(axis_y + 4.0, 2) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << X(v) << "\" y=\"" << format_fixed(axis_y + 18.0, 2) << "\" text-anchor=\"middle\">"
      << format_fixed(v, 3) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_forest_plot(std::span<const ForestDatum> data, const std::filesystem::path& stem, const std::string& title) {
  const std::string svg = render_forest_svg(data, title);
  std::filesystem::path svg_path = stem;
  svg_path += ".svg";
  std::filesystem::path csv_path = stem;
  csv_path += ".csv";
  write_file(svg_path, svg);
  std::ostringstream c;
  c << "term,beta,ci_low,ci_high,excludes_zero\n";
  for (const auto& d : data) {
    const bool excl = d.ci_low > 0.0 || d.ci_high < 0.0;
    c << csv_field(d.term) << ',' << format_double(d.beta) << ',' << format_double(d.ci_low) << ','
      << format_double(d.ci_high) << ',' << (excl ? "true" : "false") << '\n';
  }
  write_file(csv_path, c.str());
}

}  // namespace scd::lmm
