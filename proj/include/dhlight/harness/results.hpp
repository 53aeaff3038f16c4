#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dhlight::harness {

struct ResultRow {
  std::string run_id;
  std::size_t episode = 0;
  std::string controller;
  std::uint64_t seed = 0;
  double att_secs = 0.0;
  std::size_t throughput = 0;
  double mean_reward = 0.0;
  double l_recon = 0.0;
  double l_clip = 0.0;
  double wall_secs = 0.0;

  bool operator==(const ResultRow&) const = default;
};

// Append-only table behind results.csv.
class ResultsTable {
 public:
  static constexpr const char* kHeader =
      "run_id,episode,controller,seed,att_secs,throughput,mean_reward,l_recon,l_clip,wall_secs";

  // Throws NumericError unless att_secs > 0.
  void append(ResultRow row);
  void append(const ResultsTable& other);
  const std::vector<ResultRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  std::string to_csv() const;
  static ResultsTable parse_csv(const std::string& text, const std::string& source = "<csv>");
  void write(const std::filesystem::path& path) const;
  static ResultsTable read(const std::filesystem::path& path);

  // Mean ATT over the last `window` rows of the given run (all rows when fewer).
  double tail_mean_att(const std::string& run_id, std::size_t window) const;
  std::vector<std::string> run_ids() const;

  bool operator==(const ResultsTable&) const = default;

 private:
  std::vector<ResultRow> rows_;
};

}  // namespace dhlight::harness
