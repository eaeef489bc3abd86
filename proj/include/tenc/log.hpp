#pragma once

#include <functional>
#include <iostream>
#include <string>

namespace tenc {

// Destination for non-fatal warnings (duplicate sentences in a contrastive
// batch, clamped scores, ...). Defaults to stderr; tests and tools may swap it.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& module, const std::string& msg) { warning_sink()(module + ": " + msg); }

}  // namespace tenc
