#include <iostream>
#include <mutex>

#include "crvae/types.hpp"

namespace crvae {
namespace {
std::mutex g_mutex;
std::function<void(const std::string&)> g_sink;
}  // namespace

void log_warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "warning: " << msg << std::endl;
  if (g_sink) g_sink(msg);
}

void set_warn_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_sink = std::move(sink);
}

}  // namespace crvae
