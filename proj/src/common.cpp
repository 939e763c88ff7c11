#include "densea/common.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace densea {

namespace {

LogLevel parse_level(const char* s) {
  if (!s) return LogLevel::Warn;
  if (std::strcmp(s, "debug") == 0) return LogLevel::Debug;
  if (std::strcmp(s, "info") == 0) return LogLevel::Info;
  if (std::strcmp(s, "warn") == 0) return LogLevel::Warn;
  if (std::strcmp(s, "error") == 0) return LogLevel::Error;
  if (std::strcmp(s, "off") == 0) return LogLevel::Off;
  return LogLevel::Warn;
}

LogLevel& level_slot() {
  static LogLevel lv = parse_level(std::getenv("DENSEA_LOG"));
  return lv;
}

const char* level_name(LogLevel lv) {
  switch (lv) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    default: return "off";
  }
}

}  // namespace

LogLevel log_level() { return level_slot(); }
void set_log_level(LogLevel lv) { level_slot() = lv; }

void log_msg(LogLevel lv, const std::string& msg) {
  if (lv < level_slot() || level_slot() == LogLevel::Off) return;
  std::fprintf(stderr, "[densea %s] %s\n", level_name(lv), msg.c_str());
}

std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int Rng::categorical(const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) {
    if (x < 0.0 || !std::isfinite(x)) throw NumericError("categorical: bad weight");
    total += x;
  }
  if (total <= 0.0) throw NumericError("categorical: weights sum to zero");
  double r = uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(w.size()) - 1;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace densea
