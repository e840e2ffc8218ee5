#include "phasefold/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "json.hpp"

namespace phasefold::io {
namespace {

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw FormatError(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  if (!std::filesystem::exists(path)) throw FormatError(path, "missing input file");
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError(path, "cannot open for reading");
  return in;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_row(std::span<const double> values) {
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) line += ',';
    line += format_double(values[i]);
  }
  line += '\n';
  return line;
}

std::string triangle_columns(const char* prefix) {
  std::string cols;
  for (int i = 1; i <= 6; ++i) {
    for (int j = i; j <= 6; ++j) cols += "," + std::string(prefix) + std::to_string(i) + std::to_string(j);
  }
  return cols;
}

std::string ekf_columns() { return "t,x1,x2,x3,l1,l2,l3" + triangle_columns("s"); }
std::string eom_columns() { return "t,y1,y2,y3,y4,y5,y6" + triangle_columns("s"); }
constexpr const char* kMetricColumns =
    "t,err_rot_ekf,err_rot_eom,err_mom_ekf,err_mom_eom,nll_ekf,nll_eom,nll_diff";

void write_csv(const std::filesystem::path& path, const std::string& columns,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  out << kFormatLine << '\n' << columns << '\n';
  for (const auto& r : rows) out << join_row(r);
  if (!out) throw FormatError(path, "write failed");
}

std::vector<std::vector<double>> read_csv(const std::filesystem::path& path,
                                          const std::string& columns) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != kFormatLine) {
    throw FormatError(path, "first line is not '" + std::string(kFormatLine) + "'");
  }
  if (!std::getline(in, line) || line != columns) {
    throw FormatError(path, "unexpected column header (want '" + columns + "')");
  }
  const std::size_t width = split(columns, ',').size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != width) {
      throw FormatError(path, "line " + std::to_string(line_no) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(width));
    }
    std::vector<double> row;
    row.reserve(width);
    for (auto f : fields) {
      try {
        row.push_back(parse_double(f));
      } catch (const std::invalid_argument&) {
        throw FormatError(path, "line " + std::to_string(line_no) + ": bad number '" +
                                    std::string(f) + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// A compact polyline chart with axes, tick labels and a legend.
void svg_panel(std::ostream& os, double y0, double height, const char* title,
               const std::vector<double>& ts,
               const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double x0 = 70.0, width = 560.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : s.second) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-300) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double t_lo = ts.empty() ? 0.0 : ts.front();
  const double t_hi = ts.empty() ? 1.0 : std::max(ts.back(), t_lo + 1e-12);
  auto px = [&](double t) { return x0 + width * (t - t_lo) / (t_hi - t_lo); };
  auto py = [&](double v) { return y0 + height * (1.0 - (v - lo) / (hi - lo)); };

  os << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-size=\"13\">" << title << "</text>\n";
  os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    char label[32];
    std::snprintf(label, sizeof label, "%.3g", v);
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << py(v) + 4
       << "\" font-size=\"10\" text-anchor=\"end\">" << label << "</text>\n";
    const double t = t_lo + (t_hi - t_lo) * k / 4.0;
    std::snprintf(label, sizeof label, "%.3g", t);
    os << "<text x=\"" << px(t) << "\" y=\"" << y0 + height + 14
       << "\" font-size=\"10\" text-anchor=\"middle\">" << label << "</text>\n";
  }
  if (lo < 0.0 && hi > 0.0) {
    os << "<line x1=\"" << x0 << "\" x2=\"" << x0 + width << "\" y1=\"" << py(0.0) << "\" y2=\""
       << py(0.0) << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  }
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 5];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const double v = series[s].second[i];
      if (std::isfinite(v)) os << px(ts[i]) << ',' << py(v) << ' ';
    }
    os << "\"/>\n";
    os << "<text x=\"" << x0 + width + 10 << "\" y=\"" << y0 + 14 + 16 * s << "\" font-size=\"11\" fill=\""
       << color << "\">" << series[s].first << "</text>\n";
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<double> upper_triangle(const Mat6& m) {
  std::vector<double> v;
  v.reserve(21);
  for (int i = 0; i < 6; ++i) {
    for (int j = i; j < 6; ++j) v.push_back(m(i, j));
  }
  return v;
}

Mat6 from_upper_triangle(std::span<const double> v) {
  if (v.size() != 21) throw std::invalid_argument("from_upper_triangle: need 21 entries");
  Mat6 m;
  std::size_t k = 0;
  for (int i = 0; i < 6; ++i) {
    for (int j = i; j < 6; ++j) {
      m(i, j) = v[k];
      m(j, i) = v[k];
      ++k;
    }
  }
  return m;
}

EnsembleWriter::EnsembleWriter(const std::filesystem::path& path, const EnsembleHeader& header)
    : path_(path), out_(open_out(path, true)), header_(header) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "0x%016llx", static_cast<unsigned long long>(header.params_hash));
  out_ << kFormatLine << '\n'
       << "particles=" << header.particles << " snapshots=" << header.snapshots
       << " seed=" << header.seed << " dt=" << format_double(header.dt) << " params_hash=" << hash
       << '\n';
}

void EnsembleWriter::write(const Snapshot& snap) {
  if (snap.size() != header_.particles) throw FormatError(path_, "snapshot size mismatch");
  if (written_ == header_.snapshots) throw FormatError(path_, "more snapshots than declared");
  const auto bytes = static_cast<std::streamsize>(snap.size() * sizeof(double));
  out_.write(reinterpret_cast<const char*>(&snap.t), sizeof(double));
  for (const auto& c : snap.rotation) out_.write(reinterpret_cast<const char*>(c.data()), bytes);
  for (const auto& c : snap.momentum) out_.write(reinterpret_cast<const char*>(c.data()), bytes);
  if (!out_) throw FormatError(path_, "write failed");
  ++written_;
}

void EnsembleWriter::close() {
  out_.close();
  if (written_ != header_.snapshots) {
    throw FormatError(path_, "wrote " + std::to_string(written_) + " of " +
                                 std::to_string(header_.snapshots) + " snapshots");
  }
}

EnsembleReader::EnsembleReader(const std::filesystem::path& path)
    : path_(path), in_(open_in(path, true)) {
  std::string line;
  if (!std::getline(in_, line) || line != kFormatLine) {
    throw FormatError(path, "first line is not '" + std::string(kFormatLine) + "'");
  }
  if (!std::getline(in_, line)) throw FormatError(path, "missing ensemble header line");
  std::istringstream fields(line);
  std::string kv;
  int seen = 0;
  while (fields >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError(path, "malformed header field '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      if (key == "particles") {
        header_.particles = std::stoull(val);
      } else if (key == "snapshots") {
        header_.snapshots = std::stoull(val);
      } else if (key == "seed") {
        header_.seed = std::stoull(val);
      } else if (key == "dt") {
        header_.dt = parse_double(val);
      } else if (key == "params_hash") {
        header_.params_hash = std::stoull(val, nullptr, 16);
      } else {
        throw FormatError(path, "unknown header field '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw FormatError(path, "bad value for header field '" + key + "'");
    }
    ++seen;
  }
  if (seen != 5) throw FormatError(path, "incomplete ensemble header");
}

bool EnsembleReader::next(Snapshot& snap) {
  if (read_ == header_.snapshots) return false;
  const std::size_t n = header_.particles;
  const auto bytes = static_cast<std::streamsize>(n * sizeof(double));
  if (snap.size() != n) snap = Snapshot(0.0, n);
  in_.read(reinterpret_cast<char*>(&snap.t), sizeof(double));
  for (auto& c : snap.rotation) in_.read(reinterpret_cast<char*>(c.data()), bytes);
  for (auto& c : snap.momentum) in_.read(reinterpret_cast<char*>(c.data()), bytes);
  if (!in_) {
    throw FormatError(path_, "truncated at snapshot " + std::to_string(read_ + 1) + " of " +
                                 std::to_string(header_.snapshots));
  }
  ++read_;
  return true;
}

std::string particles_file_name(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "particles_t%.6f.csv", t);
  return buf;
}

void write_particles_csv(const std::filesystem::path& path, const Snapshot& snap,
                         const EnsembleHeader& header) {
  std::ofstream out = open_out(path);
  char hash[32];
  std::snprintf(hash, sizeof hash, "0x%016llx", static_cast<unsigned long long>(header.params_hash));
  out << kFormatLine << '\n'
      << "# seed=" << header.seed << " dt=" << format_double(header.dt)
      << " t=" << format_double(snap.t) << " params_hash=" << hash << '\n'
      << "r11,r12,r13,r21,r22,r23,r31,r32,r33,l1,l2,l3\n";
  std::vector<double> row(12);
  for (std::size_t i = 0; i < snap.size(); ++i) {
    for (int k = 0; k < 9; ++k) row[k] = snap.rotation[k][i];
    for (int k = 0; k < 3; ++k) row[9 + k] = snap.momentum[k][i];
    out << join_row(row);
  }
  if (!out) throw FormatError(path, "write failed");
}

void write_ekf_series(const std::filesystem::path& path, std::span<const EkfState> states) {
  std::vector<std::vector<double>> rows;
  rows.reserve(states.size());
  for (const auto& s : states) {
    std::vector<double> r{s.t, s.x(0), s.x(1), s.x(2), s.l(0), s.l(1), s.l(2)};
    const auto tri = upper_triangle(s.covariance);
    r.insert(r.end(), tri.begin(), tri.end());
    rows.push_back(std::move(r));
  }
  write_csv(path, ekf_columns(), rows);
}

std::vector<EkfState> read_ekf_series(const std::filesystem::path& path) {
  std::vector<EkfState> out;
  for (const auto& r : read_csv(path, ekf_columns())) {
    EkfState s;
    s.t = r[0];
    s.x = Vec3(r[1], r[2], r[3]);
    s.l = Vec3(r[4], r[5], r[6]);
    s.covariance = from_upper_triangle(std::span(r).subspan(7));
    out.push_back(s);
  }
  return out;
}

void write_eom_series(const std::filesystem::path& path, std::span<const EomState> states) {
  std::vector<std::vector<double>> rows;
  rows.reserve(states.size());
  for (const auto& s : states) {
    const Vec6 y = lie::log_group(s.mean);
    std::vector<double> r{s.t};
    r.insert(r.end(), y.data(), y.data() + 6);
    const auto tri = upper_triangle(s.covariance);
    r.insert(r.end(), tri.begin(), tri.end());
    rows.push_back(std::move(r));
  }
  write_csv(path, eom_columns(), rows);
}

std::vector<EomState> read_eom_series(const std::filesystem::path& path) {
  std::vector<EomState> out;
  for (const auto& r : read_csv(path, eom_columns())) {
    EomState s;
    s.t = r[0];
    Vec6 y;
    for (int k = 0; k < 6; ++k) y(k) = r[1 + k];
    s.mean = lie::exp_group(y);
    s.covariance = from_upper_triangle(std::span(r).subspan(7));
    out.push_back(s);
  }
  return out;
}

void write_metrics(const std::filesystem::path& path, const MetricSeries& series) {
  std::vector<std::vector<double>> rows;
  for (const auto& m : series.rows) {
    rows.push_back({m.t, m.err_rot_ekf, m.err_rot_eom, m.err_mom_ekf, m.err_mom_eom, m.nll_ekf,
                    m.nll_eom, m.nll_diff});
  }
  write_csv(path, kMetricColumns, rows);
}

MetricSeries read_metrics(const std::filesystem::path& path) {
  MetricSeries out;
  for (const auto& r : read_csv(path, kMetricColumns)) {
    out.rows.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]});
  }
  return out;
}

void write_metrics_svg(const std::filesystem::path& path, const MetricSeries& series) {
  std::vector<double> ts;
  std::vector<double> rot_ekf, rot_eom, mom_ekf, mom_eom, diff;
  for (const auto& m : series.rows) {
    ts.push_back(m.t);
    rot_ekf.push_back(m.err_rot_ekf);
    rot_eom.push_back(m.err_rot_eom);
    mom_ekf.push_back(m.err_mom_ekf);
    mom_eom.push_back(m.err_mom_eom);
    diff.push_back(m.nll_diff);
  }
  std::ofstream out = open_out(path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<!-- " << kFormatLine << " -->\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"560\" "
         "font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg_panel(out, 30.0, 220.0, "Mean error (Frobenius)", ts,
            {{"rotation EKF", rot_ekf},
             {"rotation EOM", rot_eom},
             {"momentum EKF", mom_ekf},
             {"momentum EOM", mom_eom}});
  svg_panel(out, 310.0, 220.0, "nll_eom - nll_ekf", ts, {{"nll_diff", diff}});
  out << "</svg>\n";
  if (!out) throw FormatError(path, "write failed");
}

void update_error_record(const std::filesystem::path& path, const std::string& stage,
                         const std::optional<ErrorRecord>& rec) {
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    const auto existing = nlohmann::ordered_json::parse(in, nullptr, false);
    if (existing.is_object() && existing.contains("errors") && existing["errors"].is_array()) {
      for (const auto& r : existing["errors"]) {
        if (r.value("stage", "") != stage) records.push_back(r);
      }
    }
  }
  if (rec) {
    nlohmann::ordered_json j;
    j["stage"] = rec->stage;
    j["kind"] = rec->kind;
    j["message"] = rec->message;
    j["time"] = rec->time;
    j["partial"] = rec->partial;
    j["outputs"] = rec->outputs;
    records.push_back(std::move(j));
  }
  if (records.empty()) {
    std::filesystem::remove(path);
    return;
  }
  nlohmann::ordered_json doc;
  doc["format"] = std::string(kFormatLine.substr(kFormatLine.find('=') + 1));
  doc["errors"] = std::move(records);
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw FormatError(path, "write failed");
}

}  // namespace phasefold::io
