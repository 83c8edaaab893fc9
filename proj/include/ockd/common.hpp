#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ockd {

struct config_error : std::runtime_error {
  explicit config_error(const std::string& m) : std::runtime_error(m) {}
};
struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& m) : std::runtime_error(m) {}
};
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& m) : std::runtime_error(m) {}
};
struct metric_error : std::runtime_error {
  explicit metric_error(const std::string& m) : std::runtime_error(m) {}
};
struct protocol_error : std::runtime_error {
  explicit protocol_error(const std::string& m) : std::runtime_error(m) {}
};
struct format_error : std::runtime_error {
  explicit format_error(const std::string& m) : std::runtime_error(m) {}
};
struct io_error : std::runtime_error {
  explicit io_error(const std::string& m) : std::runtime_error(m) {}
};
// a structurally valid file whose payload contradicts its own layer table
struct corruption_error : format_error {
  explicit corruption_error(const std::string& m) : format_error(m) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw contract_error(msg);
}

}  // namespace ockd
