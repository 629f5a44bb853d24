#include "padsim/types.hpp"

#include <string>

#include "padsim/error.hpp"

namespace padsim {

std::string_view outcome_name(Outcome outcome) { return kOutcomeNames[index(outcome)]; }

Outcome outcome_from_name(std::string_view name) {
  for (int k = 0; k < kOutcomeCount; ++k)
    if (kOutcomeNames[k] == name) return static_cast<Outcome>(k);
  throw ConfigError("unknown outcome '" + std::string(name) + "'");
}

}  // namespace padsim
