#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dcssl {

/// Observation status of a doubly censored time. The integer values are the
/// on-disk encoding.
enum class Censoring : int { Exact = 1, Right = 2, Left = 3 };

Censoring censoring_from_int(int code);
inline int to_int(Censoring c) { return static_cast<int>(c); }

/// Absolute tolerance for comparing an observed time against l/u.
inline constexpr double kBoundaryTol = 1e-9;

struct Observation {
  double x;
  Censoring delta;
};

/// Applies the window [l, u] to an event time: x = max(l, min(t, u)).
Observation derive_observation(double t, double l, double u);

struct SubjectRecord {
  std::string id;
  std::optional<double> x;  // absent for unlabeled subjects
  std::optional<Censoring> delta;
  double l = 0.0;
  double u = 0.0;
  double x_star = 0.0;
  Censoring delta_star = Censoring::Right;
  Eigen::VectorXd z;
  bool labeled = false;
};

/// Throws DataError describing the first violated invariant.
void validate_record(const SubjectRecord& rec, std::size_t row = 0);

class Cohort {
 public:
  Cohort() = default;
  Cohort(std::vector<SubjectRecord> records, int p);

  const std::vector<SubjectRecord>& records() const noexcept { return records_; }
  int p() const noexcept { return p_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t n_labeled() const noexcept { return n_labeled_; }
  std::size_t n_unlabeled() const noexcept { return records_.size() - n_labeled_; }

  /// Label fraction n / (n + N).
  double rho() const;

 private:
  std::vector<SubjectRecord> records_;
  int p_ = 0;
  std::size_t n_labeled_ = 0;
};

/// Partition by the labeled flag, preserving order.
std::pair<Cohort, Cohort> split(const Cohort& cohort);

/// Concatenation of two cohorts with equal p.
Cohort concat(const Cohort& a, const Cohort& b);

/// Header names used by the CSV reader/writer.
struct CsvSchema {
  std::string id = "id";
  std::string labeled = "labeled";
  std::string x = "x";
  std::string delta = "delta";
  std::string l = "l";
  std::string u = "u";
  std::string x_star = "x_star";
  std::string delta_star = "delta_star";
  std::string z_prefix = "z";  // z1..zp
};

Cohort load_cohort(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Lines starting with '#' are skipped (metadata written by the CLI).
Cohort parse_cohort(std::istream& in, const CsvSchema& schema = {});
void save_cohort(const Cohort& cohort, const std::filesystem::path& path,
                 const CsvSchema& schema = {});
void write_cohort(const Cohort& cohort, std::ostream& out, const CsvSchema& schema = {});

/// Which outcome of a cohort an estimator looks at.
enum class Outcome { True, Surrogate };

/// Column-oriented (time, code, L, Z) view used by the estimators.
struct SurvivalData {
  Eigen::VectorXd time;
  std::vector<Censoring> code;
  Eigen::VectorXd l;
  Eigen::MatrixXd z;  // n x p

  std::size_t n() const { return static_cast<std::size_t>(time.size()); }
  int p() const { return static_cast<int>(z.cols()); }
};

/// Builds the estimator view. Outcome::True requires every record labeled.
SurvivalData survival_view(const Cohort& cohort, Outcome outcome);

/// Throws DataError when the covariates contain a constant column or are
/// otherwise rank deficient once centered.
void check_design_rank(const Eigen::MatrixXd& z);

struct CensoringFractions {
  double exact;
  double right;
  double left;
};
CensoringFractions censoring_fractions(const SurvivalData& data);

}  // namespace dcssl
