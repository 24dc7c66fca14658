#include "sit/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace sit {

MetricsWriter::MetricsWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  out_ << kMetricsHeader << "\n";
  out_.flush();
}

void MetricsWriter::append(const MetricsRow& r) {
  char buf[352];
  std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.step), static_cast<long long>(r.epoch), r.l_rec, r.l_rot, r.l_con, r.w1,
                r.w2, r.w3, r.total, r.lr, r.ms);
  out_ << buf << "\n";
  out_.flush();
  if (!out_) throw std::runtime_error("write failed on " + path_);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error(path + ": expected metrics header '" + kMetricsHeader + "'");
  }
  std::vector<MetricsRow> rows;
  int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    MetricsRow r;
    char c = 0;
    double fields[9];
    is >> r.step >> c >> r.epoch >> c;
    for (int i = 0; i < 9; ++i) {
      is >> fields[i];
      if (i < 8) is >> c;
    }
    if (!is) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed metrics row");
    r.l_rec = fields[0];
    r.l_rot = fields[1];
    r.l_con = fields[2];
    r.w1 = fields[3];
    r.w2 = fields[4];
    r.w3 = fields[5];
    r.total = fields[6];
    r.lr = fields[7];
    r.ms = fields[8];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sit
