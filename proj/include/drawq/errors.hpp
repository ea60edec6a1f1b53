#pragma once

#include <stdexcept>
#include <string>

namespace drawq {

// Error taxonomy, mirrored by the CLI exit codes:
//   config_error    -> 2  (bad configuration file / flag / calibration input)
//   numerical_error -> 3  (non-finite loss, degenerate data)
//   contract_error  -> 4  (precondition violations: range, shape, state)
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace drawq
