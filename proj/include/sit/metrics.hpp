#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace sit {

inline constexpr const char* kMetricsHeader = "step,epoch,l_rec,l_rot,l_con,w1,w2,w3,total,lr,ms";

struct MetricsRow {
  int64_t step = 0;
  int64_t epoch = 0;
  double l_rec = 0, l_rot = 0, l_con = 0;
  double w1 = 0, w2 = 0, w3 = 0;
  double total = 0;
  double lr = 0;
  double ms = 0;
};

// Line-buffered CSV logger; the header goes out on construction and every
// append is flushed so a crash leaves a readable file.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);

 private:
  std::ofstream out_;
  std::string path_;
};

// Reads a metrics CSV back, rejecting files whose header does not match.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

}  // namespace sit
