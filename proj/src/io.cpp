#include "cpquant/io.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cpquant {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (trim(s.substr(pos)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("cannot parse number '" + s + "' for " + what);
}

}  // namespace

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument(path + ": empty dataset file");
  }
  std::vector<std::string> header = split(trim(line), ',');
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header.back() != "y") {
    throw std::invalid_argument(path + ": missing column 'y' (header must be x1..xd,y)");
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    std::string want = "x" + std::to_string(j + 1);
    if (header[j] != want) {
      throw std::invalid_argument(path + ": missing column '" + want +
                                  "' (found '" + header[j] + "')");
    }
  }
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<std::string> cells = split(t, ',');
    if (static_cast<int>(cells.size()) != d + 1) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected " + std::to_string(d + 1) +
                                  " columns, got " + std::to_string(cells.size()));
    }
    std::vector<double> row(d + 1);
    for (int j = 0; j <= d; ++j) {
      try {
        row[j] = parse_double(trim(cells[j]), "cell");
      } catch (const std::exception&) {
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": malformed number '" + cells[j] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");
  Dataset data;
  data.x.resize(static_cast<int>(rows.size()), d);
  data.y.resize(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) data.x(static_cast<int>(i), j) = rows[i][j];
    data.y[static_cast<int>(i)] = rows[i][d];
  }
  data.validate();
  return data;
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  out.precision(17);
  for (int j = 0; j < data.dim_x(); ++j) out << "x" << (j + 1) << ",";
  out << "y\n";
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.dim_x(); ++j) out << data.x(i, j) << ",";
    out << data.y[i] << "\n";
  }
  return out.str();
}

void save_dataset_csv(const Dataset& data, const std::string& path) {
  atomic_write_file(path, dataset_to_csv(data));
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_.insert(key);
  return it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw std::invalid_argument(origin_ + ": missing required key '" + key + "'");
  }
  used_.insert(key);
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return parse_double(get_string(key, ""), key);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  double v = parse_double(get_string(key, ""), key);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw std::invalid_argument(key + " must be an integer");
  }
  return i;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  std::string s = get_string(key, "");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse unsigned integer for " + key);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string s = get_string(key, "");
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(key + " must be true or false");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  if (!has(key)) return out;
  for (const auto& cell : split(get_string(key, ""), ',')) {
    std::string t = trim(cell);
    if (t.empty()) continue;
    out.push_back(static_cast<int>(parse_double(t, key)));
  }
  return out;
}

std::vector<VectorXd> KeyValueConfig::get_vector_list(
    const std::string& key) const {
  std::vector<VectorXd> out;
  if (!has(key)) return out;
  for (const auto& group : split(get_string(key, ""), ';')) {
    std::string g = trim(group);
    if (g.empty()) continue;
    std::vector<double> values;
    for (const auto& cell : split(g, ',')) {
      values.push_back(parse_double(trim(cell), key));
    }
    VectorXd v(static_cast<int>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) {
      v[static_cast<int>(j)] = values[j];
    }
    out.push_back(std::move(v));
  }
  return out;
}

void KeyValueConfig::finish() const {
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) {
      throw std::invalid_argument(origin_ + ": unknown config key '" + key + "'");
    }
  }
}

ScenarioSpec scenario_from_config(const KeyValueConfig& cfg) {
  ScenarioSpec spec;
  spec.n = cfg.get_int("scenario.n", 0);
  spec.true_breaks = cfg.get_int_list("scenario.breaks");
  spec.true_phis = cfg.get_vector_list("scenario.phis");
  spec.error_law = error_law_from_string(cfg.get_string("scenario.error_law", "normal"));
  spec.x_mean = cfg.get_double("scenario.x_mean", 1.0);
  spec.x_sd = cfg.get_double("scenario.x_sd", 1.0);
  spec.model = cfg.get_string("scenario.model", "mono_molecular");
  spec.tau = cfg.get_double("scenario.tau", 0.5);
  spec.seed = cfg.get_u64("scenario.seed", 0);
  return spec;
}

FitConfig fit_config_from_config(const KeyValueConfig& cfg) {
  FitConfig fc;
  fc.n_multistart = cfg.get_int("fit.n_multistart", fc.n_multistart);
  fc.max_iters = cfg.get_int("fit.max_iters", fc.max_iters);
  if (cfg.has("fit.smooth_h")) fc.smooth_h = cfg.get_double("fit.smooth_h", 0.0);
  fc.convergence_tol = cfg.get_double("fit.convergence_tol", fc.convergence_tol);
  fc.validate();
  return fc;
}

SegmentationConstraints constraints_from_config(const KeyValueConfig& cfg) {
  SegmentationConstraints c;
  c.min_seg_exponent =
      cfg.get_double("constraints.min_seg_exponent", c.min_seg_exponent);
  c.min_seg_floor = cfg.get_int("constraints.min_seg_floor", c.min_seg_floor);
  c.grid_step = cfg.get_int("constraints.grid_step", c.grid_step);
  return c;
}

SelectionConfig selection_from_config(const KeyValueConfig& cfg) {
  SelectionConfig sel;
  sel.k_max = cfg.get_int("selection.k_max", sel.k_max);
  sel.b_n_exponent = cfg.get_double("selection.b_n_exponent", sel.b_n_exponent);
  sel.validate();
  return sel;
}

namespace {

json vec_to_json(const VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VectorXd vec_from_json(const json& j) {
  VectorXd v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<int>(i)] = j[i].get<double>();
  }
  return v;
}

json finite_or_null(double v) {
  if (std::isfinite(v)) return json(v);
  return json();  // +inf marks infeasible entries; JSON has no infinity
}

double finite_from_json(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

json to_json(const SegmentedFit& fit) {
  json j;
  j["k"] = fit.k;
  j["breaks"] = fit.breaks;
  json phis = json::array();
  for (const auto& phi : fit.phis) phis.push_back(vec_to_json(phi));
  j["phis"] = phis;
  j["total_loss"] = fit.total_loss;
  json losses = json::array();
  for (const auto& seg : fit.per_segment) losses.push_back(seg.loss);
  j["per_segment_losses"] = losses;
  return j;
}

SegmentedFit segmented_fit_from_json(const json& j) {
  SegmentedFit fit;
  fit.k = j.at("k").get<int>();
  fit.breaks = j.at("breaks").get<std::vector<int>>();
  for (const auto& phi : j.at("phis")) fit.phis.push_back(vec_from_json(phi));
  fit.total_loss = j.at("total_loss").get<double>();
  for (std::size_t r = 0; r < j.at("per_segment_losses").size(); ++r) {
    SegmentFit seg;
    seg.loss = j.at("per_segment_losses")[r].get<double>();
    if (r < fit.phis.size()) seg.phi_hat = fit.phis[r];
    fit.per_segment.push_back(std::move(seg));
  }
  return fit;
}

json to_json(const SelectionResult& result) {
  json j;
  json crit = json::object();
  for (const auto& [k, value] : result.criterion) {
    crit[std::to_string(k)] = finite_or_null(value);
  }
  j["criterion"] = crit;
  j["k_hat"] = result.k_hat;
  json fits = json::object();
  for (const auto& [k, fit] : result.fits) {
    fits[std::to_string(k)] = to_json(fit);
  }
  j["fits"] = fits;
  j["zero_loss_flagged"] = result.zero_loss_flagged;
  return j;
}

SelectionResult selection_result_from_json(const json& j) {
  SelectionResult result;
  for (const auto& [key, value] : j.at("criterion").items()) {
    result.criterion[std::stoi(key)] = finite_from_json(value);
  }
  result.k_hat = j.at("k_hat").get<int>();
  for (const auto& [key, value] : j.at("fits").items()) {
    result.fits[std::stoi(key)] = segmented_fit_from_json(value);
  }
  result.zero_loss_flagged = j.at("zero_loss_flagged").get<bool>();
  return result;
}

json to_json(const ScenarioSpec& spec) {
  json j;
  j["n"] = spec.n;
  j["breaks"] = spec.true_breaks;
  json phis = json::array();
  for (const auto& phi : spec.true_phis) phis.push_back(vec_to_json(phi));
  j["phis"] = phis;
  j["error_law"] = to_string(spec.error_law);
  j["x_mean"] = spec.x_mean;
  j["x_sd"] = spec.x_sd;
  j["model"] = spec.model;
  j["tau"] = spec.tau;
  j["seed"] = spec.seed;
  return j;
}

ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec spec;
  spec.n = j.at("n").get<int>();
  spec.true_breaks = j.at("breaks").get<std::vector<int>>();
  for (const auto& phi : j.at("phis")) spec.true_phis.push_back(vec_from_json(phi));
  spec.error_law = error_law_from_string(j.at("error_law").get<std::string>());
  spec.x_mean = j.at("x_mean").get<double>();
  spec.x_sd = j.at("x_sd").get<double>();
  spec.model = j.at("model").get<std::string>();
  spec.tau = j.at("tau").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

json to_json(const McReport& report) {
  json j;
  j["spec"] = to_json(report.spec);
  j["n_reps"] = report.n_reps;
  j["k"] = report.k;
  j["selection_study"] = report.selection_study;
  json series = json::array();
  for (const auto& s : report.series) {
    json js;
    js["method"] = to_string(s.method);
    json reps = json::array();
    for (const auto& rep : s.per_rep) {
      json jr;
      jr["excluded"] = rep.excluded;
      if (rep.excluded) {
        jr["error"] = rep.error;
      } else {
        jr["fit"] = to_json(rep.fit);
      }
      if (rep.k_hat) {
        jr["k_hat"] = *rep.k_hat;
        json crit = json::object();
        for (const auto& [k, value] : rep.criterion) {
          crit[std::to_string(k)] = finite_or_null(value);
        }
        jr["criterion"] = crit;
      }
      reps.push_back(std::move(jr));
    }
    js["per_rep"] = reps;
    js["break_medians"] = s.break_medians;
    json means = json::array();
    for (const auto& v : s.phi_means) means.push_back(vec_to_json(v));
    js["phi_means"] = means;
    json sds = json::array();
    for (const auto& v : s.phi_sds) sds.push_back(vec_to_json(v));
    js["phi_sds"] = sds;
    json freqs = json::object();
    for (const auto& [k, count] : s.selection_freqs) {
      freqs[std::to_string(k)] = count;
    }
    js["selection_freqs"] = freqs;
    js["excluded_count"] = s.excluded_count;
    js["flagged"] = s.flagged;
    series.push_back(std::move(js));
  }
  j["series"] = series;
  return j;
}

McReport mc_report_from_json(const json& j) {
  McReport report;
  report.spec = scenario_from_json(j.at("spec"));
  report.n_reps = j.at("n_reps").get<int>();
  report.k = j.at("k").get<int>();
  report.selection_study = j.at("selection_study").get<bool>();
  for (const auto& js : j.at("series")) {
    MethodSeries s;
    s.method = method_from_string(js.at("method").get<std::string>());
    for (const auto& jr : js.at("per_rep")) {
      RepOutcome rep;
      rep.excluded = jr.at("excluded").get<bool>();
      if (rep.excluded) {
        rep.error = jr.at("error").get<std::string>();
      } else {
        rep.fit = segmented_fit_from_json(jr.at("fit"));
      }
      if (jr.contains("k_hat")) {
        rep.k_hat = jr.at("k_hat").get<int>();
        for (const auto& [key, value] : jr.at("criterion").items()) {
          rep.criterion[std::stoi(key)] = finite_from_json(value);
        }
      }
      s.per_rep.push_back(std::move(rep));
    }
    s.break_medians = js.at("break_medians").get<std::vector<double>>();
    for (const auto& v : js.at("phi_means")) s.phi_means.push_back(vec_from_json(v));
    for (const auto& v : js.at("phi_sds")) s.phi_sds.push_back(vec_from_json(v));
    for (const auto& [key, value] : js.at("selection_freqs").items()) {
      s.selection_freqs[std::stoi(key)] = value.get<int>();
    }
    s.excluded_count = js.at("excluded_count").get<int>();
    s.flagged = js.at("flagged").get<bool>();
    report.series.push_back(std::move(s));
  }
  return report;
}

json to_json(const LimitLawPmf& pmf) {
  json j;
  j["J"] = pmf.J;
  j["probs"] = pmf.probs;
  j["n_draws"] = pmf.n_draws;
  j["outside_mass"] = pmf.outside_mass;
  return j;
}

LimitLawPmf limit_pmf_from_json(const json& j) {
  LimitLawPmf pmf;
  pmf.J = j.at("J").get<int>();
  pmf.probs = j.at("probs").get<std::vector<double>>();
  pmf.n_draws = j.at("n_draws").get<long>();
  pmf.outside_mass = j.at("outside_mass").get<double>();
  return pmf;
}

json to_json(const NormalityCheck& check) {
  json j;
  j["n_used"] = check.n_used;
  j["ks_per_coord"] = std::vector<double>(
      check.ks_per_coord.data(), check.ks_per_coord.data() + check.ks_per_coord.size());
  j["cov_error"] = check.cov_error;
  return j;
}

std::string json_bytes(const json& j) { return j.dump(2) + "\n"; }

std::string mc_report_csv(const McReport& report) {
  std::ostringstream out;
  out.precision(17);
  const int k = report.spec.k();
  int p = 0;
  for (const auto& s : report.series) {
    for (const auto& rep : s.per_rep) {
      if (!rep.excluded && !rep.fit.phis.empty()) {
        p = static_cast<int>(rep.fit.phis.front().size());
        break;
      }
    }
    if (p > 0) break;
  }
  out << "method,rep,excluded,k_fit";
  if (report.selection_study) out << ",k_hat";
  for (int r = 1; r <= k; ++r) out << ",l" << r;
  for (int r = 1; r <= k + 1; ++r) {
    for (int c = 1; c <= p; ++c) out << ",phi" << r << "_" << c;
  }
  out << ",total_loss\n";
  for (const auto& s : report.series) {
    for (std::size_t rep = 0; rep < s.per_rep.size(); ++rep) {
      const RepOutcome& r0 = s.per_rep[rep];
      out << to_string(s.method) << "," << rep << "," << (r0.excluded ? 1 : 0)
          << "," << (r0.excluded ? 0 : r0.fit.k);
      if (report.selection_study) {
        out << "," << (r0.k_hat ? *r0.k_hat : -1);
      }
      for (int c = 0; c < k; ++c) {
        if (!r0.excluded && c < static_cast<int>(r0.fit.breaks.size())) {
          out << "," << r0.fit.breaks[c];
        } else {
          out << ",";
        }
      }
      for (int r = 0; r <= k; ++r) {
        for (int c = 0; c < p; ++c) {
          if (!r0.excluded && r < static_cast<int>(r0.fit.phis.size())) {
            out << "," << r0.fit.phis[r][c];
          } else {
            out << ",";
          }
        }
      }
      if (r0.excluded) {
        out << ",\n";
      } else {
        out << "," << r0.fit.total_loss << "\n";
      }
    }
  }
  return out.str();
}

std::string pmf_csv(const LimitLawPmf& pmf) {
  std::ostringstream out;
  out.precision(17);
  out << "j,prob\n";
  for (int j = -pmf.J; j <= pmf.J; ++j) {
    out << j << "," << pmf.at(j) << "\n";
  }
  return out.str();
}

std::string standardized_csv(const NormalityCheck& check) {
  std::ostringstream out;
  out.precision(17);
  const int p = static_cast<int>(check.standardized.cols());
  for (int c = 1; c <= p; ++c) {
    out << "z" << c << (c == p ? '\n' : ',');
  }
  for (int i = 0; i < check.standardized.rows(); ++i) {
    for (int c = 0; c < p; ++c) {
      out << check.standardized(i, c) << (c == p - 1 ? '\n' : ',');
    }
  }
  return out.str();
}

void atomic_write_file(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot move temp file into place: " + path);
  }
}

}  // namespace cpquant
