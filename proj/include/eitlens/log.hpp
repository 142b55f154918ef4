#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace eitlens {

namespace detail {
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::clog << "warning: " << msg << '\n';
  };
  return sink;
}
}  // namespace detail

/// Replace the warning sink (default: std::clog). Pass an empty function to silence warnings.
inline void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard lock(detail::log_mutex());
  detail::warning_sink() = std::move(sink);
}

inline void warn(const std::string& msg) {
  std::lock_guard lock(detail::log_mutex());
  if (detail::warning_sink()) detail::warning_sink()(msg);
}

}  // namespace eitlens
