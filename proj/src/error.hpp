#pragma once

#include <stdexcept>
#include <string>

namespace qamw {

enum class Errc {
  ok = 0,
  dimension = 1,
  format = 2,
  integrity = 3,
  calibration = 4,
  domain = 5,
  encoding = 6,
  io = 7,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

}  // namespace qamw
