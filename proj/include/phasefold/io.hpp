#pragma once

// On-disk formats exchanged between pipeline stages. Every file starts with
// the line `format=phasefold.v1`; CSV files follow it with a column header.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phasefold/ekf.hpp"
#include "phasefold/eom.hpp"
#include "phasefold/eval.hpp"
#include "phasefold/sampler.hpp"

namespace phasefold::io {

inline constexpr std::string_view kFormatLine = "format=phasefold.v1";

/// A stage input is missing or does not follow the expected format.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what), path_(path) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Strict parse of a whole field; throws std::invalid_argument.
double parse_double(std::string_view s);

/// The 21 entries of the upper triangle, row by row.
std::vector<double> upper_triangle(const Mat6& m);
Mat6 from_upper_triangle(std::span<const double> v);

struct EnsembleHeader {
  std::size_t particles = 0;
  std::size_t snapshots = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::uint64_t params_hash = 0;
};

/// ensemble.bin: the format line, one text line
///   particles=N snapshots=S seed=... dt=... params_hash=0x...
/// and then, per snapshot, the native-endian doubles t, the nine rotation
/// columns and the three momentum columns (N values each).
class EnsembleWriter {
 public:
  EnsembleWriter(const std::filesystem::path& path, const EnsembleHeader& header);
  void write(const Snapshot& snap);
  /// Throws FormatError unless exactly header.snapshots snapshots were written.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  EnsembleHeader header_;
  std::size_t written_ = 0;
};

class EnsembleReader {
 public:
  /// Throws FormatError if the file is missing or its header is malformed.
  explicit EnsembleReader(const std::filesystem::path& path);
  const EnsembleHeader& header() const { return header_; }
  /// Reads the next snapshot into `snap`; false after the last one.
  bool next(Snapshot& snap);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  EnsembleHeader header_;
  std::size_t read_ = 0;
};

/// particles_t<t>.csv: the format line, a `#` line with seed, dt, t and
/// params hash, the column header, then one row per particle with r11..r33
/// (row-major) and l1..l3.
void write_particles_csv(const std::filesystem::path& path, const Snapshot& snap,
                         const EnsembleHeader& header);
std::string particles_file_name(double t);

/// ekf_series.csv: t, x1..x3, l1..l3 and the 21 upper-triangle entries of Sigma.
void write_ekf_series(const std::filesystem::path& path, std::span<const EkfState> states);
std::vector<EkfState> read_ekf_series(const std::filesystem::path& path);

/// eom_series.csv: t, the six coordinates of log(mu) and the 21 upper-triangle
/// entries of Sigma.
void write_eom_series(const std::filesystem::path& path, std::span<const EomState> states);
std::vector<EomState> read_eom_series(const std::filesystem::path& path);

/// metrics.csv with header
/// t,err_rot_ekf,err_rot_eom,err_mom_ekf,err_mom_eom,nll_ekf,nll_eom,nll_diff.
void write_metrics(const std::filesystem::path& path, const MetricSeries& series);
MetricSeries read_metrics(const std::filesystem::path& path);

/// Two stacked line charts: the four mean errors and nll_diff against t.
void write_metrics_svg(const std::filesystem::path& path, const MetricSeries& series);

struct ErrorRecord {
  std::string stage;
  std::string kind;
  std::string message;
  double time = 0.0;
  bool partial = true;
  std::vector<std::string> outputs;
};

/// error.json keeps one record per failed stage under "errors". The stage's
/// previous record is dropped first; `rec` (if any) is appended and the file
/// is removed once no records remain.
void update_error_record(const std::filesystem::path& path, const std::string& stage,
                         const std::optional<ErrorRecord>& rec);

}  // namespace phasefold::io
