#include "dcssl/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dcssl/errors.hpp"

namespace dcssl {

Censoring censoring_from_int(int code) {
  if (code < 1 || code > 3) {
    throw DataError("censoring code must be 1 (exact), 2 (right) or 3 (left), got " +
                    std::to_string(code));
  }
  return static_cast<Censoring>(code);
}

Observation derive_observation(double t, double l, double u) {
  if (!(l < u)) throw DomainError("derive_observation: requires l < u");
  if (!std::isfinite(t)) throw DomainError("derive_observation: t must be finite");
  if (t < l) return {l, Censoring::Left};
  if (t > u) return {u, Censoring::Right};
  return {t, Censoring::Exact};
}

namespace {

std::string row_prefix(std::size_t row) {
  return row ? "row " + std::to_string(row) + ": " : std::string{};
}

void check_time(double x, Censoring delta, double l, double u, const char* what,
                std::size_t row) {
  if (!std::isfinite(x)) throw DataError(row_prefix(row) + what + " is not finite", row);
  switch (delta) {
    case Censoring::Left:
      if (std::abs(x - l) > kBoundaryTol)
        throw DataError(row_prefix(row) + what + " is left censored but differs from l", row);
      break;
    case Censoring::Right:
      if (std::abs(x - u) > kBoundaryTol)
        throw DataError(row_prefix(row) + what + " is right censored but differs from u", row);
      break;
    case Censoring::Exact:
      if (x < l - kBoundaryTol || x > u + kBoundaryTol)
        throw DataError(row_prefix(row) + what + " is exact but lies outside [l, u]", row);
      break;
  }
}

}  // namespace

void validate_record(const SubjectRecord& rec, std::size_t row) {
  if (!std::isfinite(rec.l) || !std::isfinite(rec.u))
    throw DataError(row_prefix(row) + "l and u must be finite", row);
  if (!(rec.l < rec.u)) throw DataError(row_prefix(row) + "requires l < u", row);
  if (rec.labeled) {
    if (!rec.x || !rec.delta)
      throw DataError(row_prefix(row) + "labeled record is missing x or delta", row);
    check_time(*rec.x, *rec.delta, rec.l, rec.u, "x", row);
  }
  check_time(rec.x_star, rec.delta_star, rec.l, rec.u, "x_star", row);
  for (Eigen::Index j = 0; j < rec.z.size(); ++j) {
    if (!std::isfinite(rec.z[j]))
      throw DataError(row_prefix(row) + "covariate z" + std::to_string(j + 1) +
                          " is not finite", row);
  }
}

Cohort::Cohort(std::vector<SubjectRecord> records, int p)
    : records_(std::move(records)), p_(p) {
  if (p < 0) throw DataError("covariate dimension must be >= 0");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.z.size() != p)
      throw DataError("record " + rec.id + " has " + std::to_string(rec.z.size()) +
                      " covariates, expected " + std::to_string(p));
    validate_record(rec);
    if (rec.labeled) ++n_labeled_;
  }
}

double Cohort::rho() const {
  if (records_.empty()) throw DataError("rho: empty cohort");
  return static_cast<double>(n_labeled_) / static_cast<double>(records_.size());
}

std::pair<Cohort, Cohort> split(const Cohort& cohort) {
  std::vector<SubjectRecord> labeled, unlabeled;
  for (const auto& rec : cohort.records()) (rec.labeled ? labeled : unlabeled).push_back(rec);
  return {Cohort(std::move(labeled), cohort.p()), Cohort(std::move(unlabeled), cohort.p())};
}

Cohort concat(const Cohort& a, const Cohort& b) {
  if (a.p() != b.p()) throw DataError("concat: covariate dimensions differ");
  auto records = a.records();
  records.insert(records.end(), b.records().begin(), b.records().end());
  return Cohort(std::move(records), a.p());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

double parse_double(const std::string& cell, const std::string& column, std::size_t row) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc{} || ptr != last) {
    throw DataError("row " + std::to_string(row) + ": malformed number '" + cell +
                        "' in column " + column, row);
  }
  return value;
}

int parse_int(const std::string& cell, const std::string& column, std::size_t row) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw DataError("row " + std::to_string(row) + ": malformed integer '" + cell +
                        "' in column " + column, row);
  }
  return value;
}

Censoring parse_code(const std::string& cell, const std::string& column, std::size_t row) {
  const int code = parse_int(cell, column, row);
  if (code < 1 || code > 3) {
    throw DataError("row " + std::to_string(row) + ": invalid censoring code " + cell +
                        " in column " + column, row);
  }
  return static_cast<Censoring>(code);
}

bool parse_flag(const std::string& cell, const std::string& column, std::size_t row) {
  if (cell == "1" || cell == "true" || cell == "TRUE") return true;
  if (cell == "0" || cell == "false" || cell == "FALSE") return false;
  throw DataError("row " + std::to_string(row) + ": invalid flag '" + cell + "' in column " +
                      column, row);
}

}  // namespace

Cohort parse_cohort(std::istream& in, const CsvSchema& schema) {
  std::string line;
  // leading '#' lines are metadata
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    have_header = true;
    break;
  }
  if (!have_header) throw DataError("missing header row");
  const auto header = split_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };
  const auto c_id = require(schema.id);
  const auto c_lab = require(schema.labeled);
  const auto c_x = require(schema.x);
  const auto c_delta = require(schema.delta);
  const auto c_l = require(schema.l);
  const auto c_u = require(schema.u);
  const auto c_xs = require(schema.x_star);
  const auto c_ds = require(schema.delta_star);
  std::vector<std::size_t> c_z;
  for (int j = 1;; ++j) {
    auto it = col.find(schema.z_prefix + std::to_string(j));
    if (it == col.end()) break;
    c_z.push_back(it->second);
  }
  const int p = static_cast<int>(c_z.size());

  std::vector<SubjectRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                          std::to_string(header.size()) + " cells, found " +
                          std::to_string(cells.size()), row);
    }
    SubjectRecord rec;
    rec.id = cells[c_id];
    rec.labeled = parse_flag(cells[c_lab], schema.labeled, row);
    if (rec.labeled) {
      if (cells[c_x].empty() || cells[c_delta].empty())
        throw DataError("row " + std::to_string(row) + ": labeled row has empty x/delta", row);
      rec.x = parse_double(cells[c_x], schema.x, row);
      rec.delta = parse_code(cells[c_delta], schema.delta, row);
    }
    rec.l = parse_double(cells[c_l], schema.l, row);
    rec.u = parse_double(cells[c_u], schema.u, row);
    rec.x_star = parse_double(cells[c_xs], schema.x_star, row);
    rec.delta_star = parse_code(cells[c_ds], schema.delta_star, row);
    rec.z.resize(p);
    for (int j = 0; j < p; ++j)
      rec.z[j] = parse_double(cells[c_z[j]], schema.z_prefix + std::to_string(j + 1), row);
    validate_record(rec, row);
    records.push_back(std::move(rec));
  }
  return Cohort(std::move(records), p);
}

Cohort load_cohort(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_cohort(in, schema);
}

void write_cohort(const Cohort& cohort, std::ostream& out, const CsvSchema& schema) {
  out << schema.id << ',' << schema.labeled << ',' << schema.x << ',' << schema.delta << ','
      << schema.l << ',' << schema.u << ',' << schema.x_star << ',' << schema.delta_star;
  for (int j = 1; j <= cohort.p(); ++j) out << ',' << schema.z_prefix << j;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& rec : cohort.records()) {
    out << rec.id << ',' << (rec.labeled ? 1 : 0) << ',';
    if (rec.labeled) out << *rec.x << ',' << to_int(*rec.delta);
    else out << ',';
    out << ',' << rec.l << ',' << rec.u << ',' << rec.x_star << ',' << to_int(rec.delta_star);
    for (Eigen::Index j = 0; j < rec.z.size(); ++j) out << ',' << rec.z[j];
    out << '\n';
  }
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path,
                 const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_cohort(cohort, out, schema);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

SurvivalData survival_view(const Cohort& cohort, Outcome outcome) {
  const auto& recs = cohort.records();
  const Eigen::Index n = static_cast<Eigen::Index>(recs.size());
  SurvivalData d;
  d.time.resize(n);
  d.l.resize(n);
  d.code.resize(recs.size());
  d.z.resize(n, cohort.p());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = recs[i];
    if (outcome == Outcome::True) {
      if (!rec.labeled) throw DataError("true-outcome view requested for unlabeled record " + rec.id);
      d.time[i] = *rec.x;
      d.code[i] = *rec.delta;
    } else {
      d.time[i] = rec.x_star;
      d.code[i] = rec.delta_star;
    }
    d.l[i] = rec.l;
    d.z.row(i) = rec.z.transpose();
  }
  return d;
}

void check_design_rank(const Eigen::MatrixXd& z) {
  if (z.cols() == 0) return;
  if (z.rows() <= z.cols()) throw DataError("fewer subjects than covariates");
  const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (centered.col(j).cwiseAbs().maxCoeff() == 0.0)
      throw DataError("covariate z" + std::to_string(j + 1) + " is constant");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
  qr.setThreshold(1e-10);
  if (qr.rank() < z.cols()) throw DataError("covariate matrix is rank deficient");
}

CensoringFractions censoring_fractions(const SurvivalData& data) {
  CensoringFractions f{0, 0, 0};
  for (auto c : data.code) {
    if (c == Censoring::Exact) f.exact += 1;
    else if (c == Censoring::Right) f.right += 1;
    else f.left += 1;
  }
  const double n = std::max<double>(1.0, static_cast<double>(data.code.size()));
  f.exact /= n;
  f.right /= n;
  f.left /= n;
  return f;
}

}  // namespace dcssl
