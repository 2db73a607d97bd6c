#pragma once

#include "whittle/covariance.hpp"
#include "whittle/forward_models.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace whittle {

struct InversionConfig {
  std::string model = "heat";        // tomo | heat
  std::string geometry = "cross-well";
  Index sources = 0;                 // 0: ceil(0.4 n)
  Index receivers = 0;               // 0: ceil(0.6 n)
  double final_time = 0.01;
  int steps = 100;
  Index sensor_stride = 4;
  double noise = 0.02;
  int max_iter = 100;
  double stop_tol = 1e-6;
  bool reorthogonalize = true;
  std::optional<double> lambda;      // fixed lambda instead of GCV
  std::optional<double> gcv_weight;
  bool adaptive_weight = false;      // weighted GCV with adaptive weights
  Index uq_rank = 0;                 // 0: same as the MAP iteration count
  int diag_samples = 300;
};

/// Scalar prior parameters as written in a config file.
struct PriorSettings {
  double alpha = 2.5;
  double kappa2 = 100.0;
  double l1sq = 1.0;
  double l2sq = 1.0;
  double angle = 0.0;
  double lambda = 1.0;

  PriorConfig build() const;
};

struct SamplingConfig {
  std::uint64_t seed = 0;
  int n_samples = 1;
  Index kl_modes = 100;
  int oversample = 20;
  int power_iterations = 1;
};

/// Parsed run configuration. Sections: [grid], [prior], [solver],
/// [inversion], [sampling]; `key = value` lines, `#` comments.
struct Config {
  Grid grid = Grid::unit_square(65);
  PriorSettings prior;
  CovarianceOptions solver;
  InversionConfig inversion;
  SamplingConfig sampling;

  void validate() const;
};

Config parse_config(std::istream& in, const std::string& source = "<config>");
/// Reads keys on top of `cfg` (unset keys keep their current values), then validates.
void read_config_into(Config& cfg, std::istream& in, const std::string& source = "<config>");
void load_config_into(Config& cfg, const std::string& path);
Config parse_config_string(const std::string& text);
Config load_config(const std::string& path);
/// Applies one `section.key=value` override on top of a parsed config.
void apply_override(Config& cfg, const std::string& assignment);

/// FLD1: "FLD1", uint32 nx, uint32 ny, uint32 flags = 0, then nx * ny
/// little-endian float64 values with j outer and i inner.
struct Field {
  Index nx = 0, ny = 0;
  Vector values;
};

void write_field(std::ostream& out, Index nx, Index ny, const Vector& values);
void save_field(const std::string& path, Index nx, Index ny, const Vector& values);
inline void save_field(const std::string& path, const Grid& grid, const Vector& values) {
  save_field(path, grid.nx, grid.ny, values);
}
Field read_field(std::istream& in, const std::string& source = "<field>");
Field load_field(const std::string& path);
/// Loads a field and checks it against the grid's dimensions.
Vector load_field(const std::string& path, const Grid& grid);

/// Data CSV: header `index,value,variance`, one row per observation.
void write_data_csv(std::ostream& out, const Vector& values, const Vector& variance);
void save_data_csv(const std::string& path, const Vector& values, const Vector& variance);
struct DataSet {
  Vector values;
  Vector variance;
};
DataSet read_data_csv(std::istream& in, const std::string& source = "<data>");
DataSet load_data_csv(const std::string& path);

/// Binary P5 PGM, ny rows by nx columns, row 0 at the top (largest y).
/// Min-max normalized to 0..255; a constant field renders as 128.
void write_pgm(std::ostream& out, Index nx, Index ny, const Vector& values);
void save_pgm(const std::string& path, Index nx, Index ny, const Vector& values);

/// Fixed-format CSV table helpers, locale independent.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& cols);
  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(long v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(const std::string& s);
  CsvWriter& operator<<(const char* s) { return *this << std::string(s); }
  void end_row();

 private:
  void sep();
  std::ostream& out_;
  bool first_ = true;
};

/// Locale-independent shortest round-trip formatting of a double.
std::string format_double(double v);
/// Locale-independent strict parse; throws ValidationError on junk.
double parse_double(const std::string& text, const std::string& what);

}  // namespace whittle
