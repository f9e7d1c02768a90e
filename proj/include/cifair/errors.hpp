#pragma once

#include <stdexcept>
#include <string>

namespace cifair {

struct admissibility_error : std::runtime_error {
    explicit admissibility_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct identification_error : std::runtime_error {
    explicit identification_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct empty_group_error : std::runtime_error {
    explicit empty_group_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cifair
