#pragma once

#include <cstddef>

#include <json.hpp>

#include "rlogist/errors.hpp"

namespace rlogist::nets {

struct NetArch {
  std::size_t dim = 16;
  std::size_t policy_hidden = 64;
  std::size_t value_hidden = 64;
  std::size_t classifier_hidden = 64;
  std::size_t classifier_gate = 32;
  std::size_t local_hidden = 32;
  std::size_t global_hidden = 64;
  // Multiplier on the policy output layer at init; small values start near-uniform.
  double policy_output_scale = 0.01;

  std::size_t policy_input() const { return 3 * dim + 2; }
  std::size_t value_input() const { return 2 * dim + 1; }
  std::size_t classifier_input() const { return dim + 1; }
  std::size_t global_input() const { return 3 * dim; }

  void validate() const {
    if (dim == 0 || policy_hidden == 0 || value_hidden == 0 || classifier_hidden == 0 || classifier_gate == 0 ||
        local_hidden == 0 || global_hidden == 0) {
      throw InvalidSpecError("network widths must be positive");
    }
  }

  friend bool operator==(const NetArch&, const NetArch&) = default;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(NetArch, dim, policy_hidden, value_hidden, classifier_hidden,
                                              classifier_gate, local_hidden, global_hidden, policy_output_scale)
};

}  // namespace rlogist::nets
