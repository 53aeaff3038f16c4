#include "dhlight/harness/results.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dhlight/error.hpp"
#include "dhlight/harness/config.hpp"

namespace dhlight::harness {

void ResultsTable::append(ResultRow row) {
  if (!(row.att_secs > 0.0)) {
    throw NumericError("run " + row.run_id + " episode " + std::to_string(row.episode) + " has non-positive ATT");
  }
  if (row.run_id.find_first_of(",\n\"") != std::string::npos ||
      row.controller.find_first_of(",\n\"") != std::string::npos) {
    throw ConfigError("run id and controller must not contain commas, quotes or newlines");
  }
  rows_.push_back(std::move(row));
}

void ResultsTable::append(const ResultsTable& other) {
  for (const ResultRow& r : other.rows_) append(r);
}

std::string ResultsTable::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const ResultRow& r : rows_) {
    out += r.run_id + ',' + std::to_string(r.episode) + ',' + r.controller + ',' + std::to_string(r.seed) + ',' +
           format_double(r.att_secs) + ',' + std::to_string(r.throughput) + ',' + format_double(r.mean_reward) + ',' +
           format_double(r.l_recon) + ',' + format_double(r.l_clip) + ',' + format_double(r.wall_secs) + '\n';
  }
  return out;
}

namespace {

template <typename T>
T parse_field(const std::string& s, const std::string& where, const char* name) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(where + ": bad " + name + " '" + s + "'");
  }
  return v;
}

}  // namespace

ResultsTable ResultsTable::parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ParseError(source + ": missing results header");
  ResultsTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw ParseError(where + ": expected 10 fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.run_id = f[0];
    r.episode = parse_field<std::size_t>(f[1], where, "episode");
    r.controller = f[2];
    r.seed = parse_field<std::uint64_t>(f[3], where, "seed");
    r.att_secs = parse_field<double>(f[4], where, "att_secs");
    r.throughput = parse_field<std::size_t>(f[5], where, "throughput");
    r.mean_reward = parse_field<double>(f[6], where, "mean_reward");
    r.l_recon = parse_field<double>(f[7], where, "l_recon");
    r.l_clip = parse_field<double>(f[8], where, "l_clip");
    r.wall_secs = parse_field<double>(f[9], where, "wall_secs");
    try {
      table.append(std::move(r));
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return table;
}

void ResultsTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv();
}

ResultsTable ResultsTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

double ResultsTable::tail_mean_att(const std::string& run_id, std::size_t window) const {
  std::vector<double> att;
  for (const ResultRow& r : rows_) {
    if (r.run_id == run_id) att.push_back(r.att_secs);
  }
  if (att.empty()) throw LookupError("no rows for run '" + run_id + "'");
  const std::size_t n = std::min(window, att.size());
  double s = 0.0;
  for (std::size_t i = att.size() - n; i < att.size(); ++i) s += att[i];
  return s / static_cast<double>(n);
}

std::vector<std::string> ResultsTable::run_ids() const {
  std::vector<std::string> ids;
  for (const ResultRow& r : rows_) {
    if (std::find(ids.begin(), ids.end(), r.run_id) == ids.end()) ids.push_back(r.run_id);
  }
  return ids;
}

}  // namespace dhlight::harness
