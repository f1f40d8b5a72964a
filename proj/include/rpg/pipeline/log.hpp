#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "rpg/core/errors.hpp"
#include "rpg/eval/metrics.hpp"

#ifndef RPG_VERSION
#define RPG_VERSION "0.1.0-unknown"
#endif

namespace rpg::pipeline {

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel parse_log_level(const std::string& s) {
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw ConfigError("RPG_LOG_LEVEL must be error, info or debug (got '" + s + "')");
}

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("RPG_LOG_LEVEL");
  return v && *v ? parse_log_level(v) : LogLevel::info;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Collects the run log of one subcommand and mirrors messages to stderr.
/// Carries no timestamps or paths so reruns produce identical bytes.
class RunLog {
 public:
  RunLog(std::string command, std::uint64_t config_hash, LogLevel level = LogLevel::info)
      : level_(level) {
    text_ = "command=" + command + "\nversion=" RPG_VERSION "\nconfig_hash=" + hex64(config_hash) + "\n";
  }

  void info(const std::string& msg) { emit(LogLevel::info, msg); }
  void debug(const std::string& msg) { emit(LogLevel::debug, msg); }
  void error(const std::string& msg) { emit(LogLevel::error, msg); }

  const std::string& text() const noexcept { return text_; }
  void save(const std::filesystem::path& path) const { eval::write_text(path, text_); }

 private:
  void emit(LogLevel lvl, const std::string& msg) {
    if (lvl != LogLevel::debug) text_ += msg + "\n";
    if (lvl <= level_) std::cerr << "[rpg] " << msg << "\n";
  }
  LogLevel level_;
  std::string text_;
};

}  // namespace rpg::pipeline
