#include "whittle/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <type_traits>

namespace whittle {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

long long parse_integer(const std::string& text, const std::string& what) {
  long long v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) throw ValidationError(what + ": expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
  if (text == "false" || text == "no" || text == "off" || text == "0") return false;
  throw ValidationError(what + ": expected true or false, got '" + text + "'");
}

using Setter = std::function<void(Config&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto real = [&t](const std::string& key, auto member) {
      t[key] = [member](Config& c, const std::string& v, const std::string& what) { member(c) = parse_double(v, what); };
    };
    auto integer = [&t](const std::string& key, auto member) {
      t[key] = [member](Config& c, const std::string& v, const std::string& what) {
        using T = std::remove_reference_t<decltype(member(c))>;
        member(c) = static_cast<T>(parse_integer(v, what));
      };
    };
    auto text = [&t](const std::string& key, auto member) {
      t[key] = [member](Config& c, const std::string& v, const std::string&) { member(c) = v; };
    };

    integer("grid.nx", [](Config& c) -> Index& { return c.grid.nx; });
    integer("grid.ny", [](Config& c) -> Index& { return c.grid.ny; });
    t["grid.n"] = [](Config& c, const std::string& v, const std::string& what) {
      c.grid.nx = c.grid.ny = static_cast<Index>(parse_integer(v, what));
    };
    real("grid.x0", [](Config& c) -> double& { return c.grid.x0; });
    real("grid.x1", [](Config& c) -> double& { return c.grid.x1; });
    real("grid.y0", [](Config& c) -> double& { return c.grid.y0; });
    real("grid.y1", [](Config& c) -> double& { return c.grid.y1; });

    real("prior.alpha", [](Config& c) -> double& { return c.prior.alpha; });
    real("prior.kappa2", [](Config& c) -> double& { return c.prior.kappa2; });
    real("prior.theta.l1sq", [](Config& c) -> double& { return c.prior.l1sq; });
    real("prior.theta.l2sq", [](Config& c) -> double& { return c.prior.l2sq; });
    real("prior.theta.angle", [](Config& c) -> double& { return c.prior.angle; });
    real("prior.lambda", [](Config& c) -> double& { return c.prior.lambda; });

    real("solver.tol", [](Config& c) -> double& { return c.solver.tol; });
    integer("solver.max_iter", [](Config& c) -> int& { return c.solver.max_iter; });
    t["solver.taus"] = [](Config& c, const std::string& v, const std::string& what) {
      c.solver.taus.clear();
      for (const auto& item : split(v, ',')) c.solver.taus.push_back(parse_double(item, what));
    };
    t["solver.zeta"] = [](Config& c, const std::string& v, const std::string& what) { c.solver.zeta = parse_double(v, what); };

    text("inversion.model", [](Config& c) -> std::string& { return c.inversion.model; });
    text("inversion.geometry", [](Config& c) -> std::string& { return c.inversion.geometry; });
    integer("inversion.sources", [](Config& c) -> Index& { return c.inversion.sources; });
    integer("inversion.receivers", [](Config& c) -> Index& { return c.inversion.receivers; });
    real("inversion.final_time", [](Config& c) -> double& { return c.inversion.final_time; });
    integer("inversion.steps", [](Config& c) -> int& { return c.inversion.steps; });
    integer("inversion.sensor_stride", [](Config& c) -> Index& { return c.inversion.sensor_stride; });
    real("inversion.noise", [](Config& c) -> double& { return c.inversion.noise; });
    integer("inversion.max_iter", [](Config& c) -> int& { return c.inversion.max_iter; });
    real("inversion.stop_tol", [](Config& c) -> double& { return c.inversion.stop_tol; });
    t["inversion.reorthogonalize"] = [](Config& c, const std::string& v, const std::string& what) {
      c.inversion.reorthogonalize = parse_bool(v, what);
    };
    t["inversion.lambda"] = [](Config& c, const std::string& v, const std::string& what) {
      c.inversion.lambda = parse_double(v, what);
    };
    t["inversion.adaptive_weight"] = [](Config& c, const std::string& v, const std::string& what) {
      c.inversion.adaptive_weight = parse_bool(v, what);
    };
    t["inversion.gcv_weight"] = [](Config& c, const std::string& v, const std::string& what) {
      c.inversion.gcv_weight = parse_double(v, what);
    };
    integer("inversion.uq_rank", [](Config& c) -> Index& { return c.inversion.uq_rank; });
    integer("inversion.diag_samples", [](Config& c) -> int& { return c.inversion.diag_samples; });

    t["sampling.seed"] = [](Config& c, const std::string& v, const std::string& what) {
      const long long s = parse_integer(v, what);
      if (s < 0) throw ValidationError(what + ": seed must be nonnegative");
      c.sampling.seed = static_cast<std::uint64_t>(s);
    };
    integer("sampling.n_samples", [](Config& c) -> int& { return c.sampling.n_samples; });
    integer("sampling.kl_modes", [](Config& c) -> Index& { return c.sampling.kl_modes; });
    integer("sampling.oversample", [](Config& c) -> int& { return c.sampling.oversample; });
    integer("sampling.power_iterations", [](Config& c) -> int& { return c.sampling.power_iterations; });
    return t;
  }();
  return table;
}

void set_key(Config& cfg, const std::string& key, const std::string& value, const std::string& where) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ValidationError(where + ": unknown key '" + key + "'");
  it->second(cfg, value, where + ": " + key);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* begin = t.data();
  if (!t.empty() && t[0] == '+') ++begin;
  const char* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (t.empty() || ec != std::errc() || ptr != end) throw ValidationError(what + ": expected a number, got '" + text + "'");
  return v;
}

PriorConfig PriorSettings::build() const {
  PriorConfig p;
  p.alpha = alpha;
  p.coeff = Coefficients::constant(kappa2, Tensor2::rotated(l1sq, l2sq, angle));
  p.lambda_c = lambda;
  return p;
}

void Config::validate() const {
  grid.validate();
  if (!(prior.alpha > 0.0)) throw ValidationError("prior.alpha must be positive");
  if (!(prior.kappa2 >= 0.0)) throw ValidationError("prior.kappa2 must be nonnegative");
  if (!(prior.l1sq > 0.0) || !(prior.l2sq > 0.0)) throw ValidationError("prior.theta: l1sq and l2sq must be positive");
  if (!std::isfinite(prior.angle)) throw ValidationError("prior.theta.angle must be finite");
  if (!(prior.lambda > 0.0)) throw ValidationError("prior.lambda must be positive");
  if (solver.taus.empty()) throw ValidationError("solver.taus must list at least one value");
  for (double t : solver.taus)
    if (!(t > 0.0)) throw ValidationError("solver.taus entries must be positive");
  if (!(solver.tol > 0.0)) throw ValidationError("solver.tol must be positive");
  if (solver.max_iter < 1) throw ValidationError("solver.max_iter must be positive");
  if (solver.zeta && !(*solver.zeta > 0.0)) throw ValidationError("solver.zeta must be positive");
  if (inversion.model != "tomo" && inversion.model != "heat")
    throw ValidationError("inversion.model must be tomo or heat, got '" + inversion.model + "'");
  parse_geometry(inversion.geometry);
  if (inversion.sources < 0 || inversion.receivers < 0) throw ValidationError("inversion: negative ray counts");
  if (!(inversion.final_time > 0.0)) throw ValidationError("inversion.final_time must be positive");
  if (inversion.steps < 1) throw ValidationError("inversion.steps must be positive");
  if (inversion.sensor_stride < 1) throw ValidationError("inversion.sensor_stride must be positive");
  if (!(inversion.noise >= 0.0)) throw ValidationError("inversion.noise must be nonnegative");
  if (inversion.max_iter < 1) throw ValidationError("inversion.max_iter must be positive");
  if (!(inversion.stop_tol >= 0.0)) throw ValidationError("inversion.stop_tol must be nonnegative");
  if (inversion.lambda && !(*inversion.lambda > 0.0)) throw ValidationError("inversion.lambda must be positive");
  if (inversion.gcv_weight && !(*inversion.gcv_weight > 0.0)) throw ValidationError("inversion.gcv_weight must be positive");
  if (inversion.uq_rank < 0) throw ValidationError("inversion.uq_rank must be nonnegative");
  if (inversion.diag_samples < 3) throw ValidationError("inversion.diag_samples must be at least 3");
  if (sampling.n_samples < 1) throw ValidationError("sampling.n_samples must be positive");
  if (sampling.kl_modes < 1) throw ValidationError("sampling.kl_modes must be positive");
  if (sampling.oversample < 0) throw ValidationError("sampling.oversample must be nonnegative");
  if (sampling.power_iterations < 0) throw ValidationError("sampling.power_iterations must be nonnegative");
}

Config parse_config(std::istream& in, const std::string& source) {
  Config cfg;
  read_config_into(cfg, in, source);
  return cfg;
}

void read_config_into(Config& cfg, std::istream& in, const std::string& source) {
  static const std::vector<std::string> sections{"grid", "prior", "solver", "inversion", "sampling"};
  std::string line, section;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ValidationError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (section.empty()) throw ValidationError(where + ": key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    if (seen.count(full)) throw ValidationError(where + ": duplicate key '" + full + "' (first on line " + std::to_string(seen[full]) + ")");
    seen[full] = lineno;
    set_key(cfg, full, value, where);
  }
  cfg.validate();
}

void load_config_into(Config& cfg, const std::string& path) {
  std::ifstream in = open_in(path, false);
  read_config_into(cfg, in, path);
}

Config parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

Config load_config(const std::string& path) {
  std::ifstream in = open_in(path, false);
  return parse_config(in, path);
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override '" + assignment + "': expected section.key=value");
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "override");
  cfg.validate();
}

void write_field(std::ostream& out, Index nx, Index ny, const Vector& values) {
  if (nx < 1 || ny < 1 || values.size() != nx * ny) throw ValidationError("write_field: size does not match nx * ny");
  out.write("FLD1", 4);
  put_u32(out, static_cast<std::uint32_t>(nx));
  put_u32(out, static_cast<std::uint32_t>(ny));
  put_u32(out, 0);
  std::vector<char> buf(static_cast<std::size_t>(values.size()) * 8);
  for (Index k = 0; k < values.size(); ++k) {
    std::uint64_t bits;
    const double v = values(k);
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) buf[static_cast<std::size_t>(k * 8 + b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ValidationError("write_field: write failed");
}

void save_field(const std::string& path, Index nx, Index ny, const Vector& values) {
  std::ofstream out = open_out(path, true);
  write_field(out, nx, ny, values);
}

Field read_field(std::istream& in, const std::string& source) {
  std::array<unsigned char, 16> head{};
  in.read(reinterpret_cast<char*>(head.data()), 16);
  if (in.gcount() != 16) throw FormatError(source + ": truncated FLD1 header");
  if (std::memcmp(head.data(), "FLD1", 4) != 0) throw FormatError(source + ": bad magic, not an FLD1 file");
  Field f;
  f.nx = get_u32(head.data() + 4);
  f.ny = get_u32(head.data() + 8);
  const std::uint32_t flags = get_u32(head.data() + 12);
  if (flags != 0) throw FormatError(source + ": unsupported FLD1 flags " + std::to_string(flags));
  if (f.nx < 1 || f.ny < 1) throw FormatError(source + ": zero dimension in FLD1 header");
  const std::size_t n = static_cast<std::size_t>(f.nx * f.ny);
  std::vector<unsigned char> buf(n * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != buf.size())
    throw FormatError(source + ": truncated payload, header promises " + std::to_string(n) + " values but only " +
                      std::to_string(got) + " bytes follow");
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(source + ": payload longer than the " + std::to_string(f.nx) + " x " + std::to_string(f.ny) +
                      " header dimensions");
  f.values.resize(static_cast<Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[k * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    double v;
    std::memcpy(&v, &bits, 8);
    f.values(static_cast<Index>(k)) = v;
  }
  return f;
}

Field load_field(const std::string& path) {
  std::ifstream in = open_in(path, true);
  return read_field(in, path);
}

Vector load_field(const std::string& path, const Grid& grid) {
  Field f = load_field(path);
  if (f.nx != grid.nx || f.ny != grid.ny)
    throw ValidationError(path + ": field is " + std::to_string(f.nx) + " x " + std::to_string(f.ny) + ", grid is " +
                          std::to_string(grid.nx) + " x " + std::to_string(grid.ny));
  return f.values;
}

void write_data_csv(std::ostream& out, const Vector& values, const Vector& variance) {
  if (values.size() != variance.size()) throw ValidationError("write_data_csv: value and variance lengths differ");
  CsvWriter w(out);
  w.header({"index", "value", "variance"});
  for (Index i = 0; i < values.size(); ++i) {
    w << static_cast<long long>(i) << values(i) << variance(i);
    w.end_row();
  }
}

void save_data_csv(const std::string& path, const Vector& values, const Vector& variance) {
  std::ofstream out = open_out(path, false);
  write_data_csv(out, values, variance);
}

DataSet read_data_csv(std::istream& in, const std::string& source) {
  std::vector<double> vals, vars;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (lineno == 1 && line.rfind("index", 0) == 0) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 3) throw FormatError(where + ": expected 3 columns (index,value,variance), got " + std::to_string(cols.size()));
    long long idx = 0;
    try {
      idx = parse_integer(cols[0], where + ": index");
      vals.push_back(parse_double(cols[1], where + ": value"));
      vars.push_back(parse_double(cols[2], where + ": variance"));
    } catch (const FormatError&) {
      throw;
    } catch (const ValidationError& e) {
      throw FormatError(e.what());
    }
    if (idx != static_cast<long long>(vals.size()) - 1)
      throw FormatError(where + ": index " + std::to_string(idx) + " out of sequence, expected " + std::to_string(vals.size() - 1));
    if (!(vars.back() > 0.0) || !std::isfinite(vars.back())) throw FormatError(where + ": variance must be positive");
    if (!std::isfinite(vals.back())) throw FormatError(where + ": value is not finite");
  }
  if (vals.empty()) throw FormatError(source + ": no data rows");
  DataSet d;
  d.values = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
  d.variance = Eigen::Map<const Vector>(vars.data(), static_cast<Index>(vars.size()));
  return d;
}

DataSet load_data_csv(const std::string& path) {
  std::ifstream in = open_in(path, false);
  return read_data_csv(in, path);
}

void write_pgm(std::ostream& out, Index nx, Index ny, const Vector& values) {
  if (nx < 1 || ny < 1 || values.size() != nx * ny) throw ValidationError("write_pgm: size does not match nx * ny");
  std::vector<Index> bad;
  for (Index k = 0; k < values.size(); ++k)
    if (!std::isfinite(values(k))) bad.push_back(k);
  if (!bad.empty()) {
    std::string msg = "write_pgm: " + std::to_string(bad.size()) + " non-finite value(s) at index";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) msg += " " + std::to_string(bad[i]);
    if (bad.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  out << "P5\n" << nx << " " << ny << "\n255\n";
  std::vector<unsigned char> pix(static_cast<std::size_t>(nx * ny));
  for (Index r = 0; r < ny; ++r) {
    const Index j = ny - 1 - r;
    for (Index i = 0; i < nx; ++i) {
      const double v = values(j * nx + i);
      const double g = hi > lo ? std::round(255.0 * (v - lo) / (hi - lo)) : 128.0;
      pix[static_cast<std::size_t>(r * nx + i)] = static_cast<unsigned char>(std::clamp(g, 0.0, 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
}

void save_pgm(const std::string& path, Index nx, Index ny, const Vector& values) {
  std::ofstream out = open_out(path, true);
  write_pgm(out, nx, ny, values);
}

void CsvWriter::header(const std::vector<std::string>& cols) {
  for (const auto& c : cols) *this << c;
  end_row();
}

void CsvWriter::sep() {
  if (!first_) out_ << ',';
  first_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
  sep();
  out_ << std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
  sep();
  out_ << s;
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

}  // namespace whittle
