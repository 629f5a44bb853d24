#pragma once

#include <array>
#include <string_view>

namespace padsim {

// The seven simulated cognitive/functional outcomes, in random-effects order.
enum class Outcome : int {
  AdasDwr = 0,
  LogMem,
  TrailsB,
  Mmse,
  CategoryFluency,
  Cdrsb,
  Faq,
};
inline constexpr int kOutcomeCount = 7;

inline constexpr std::array<std::string_view, kOutcomeCount> kOutcomeNames = {
    "ADAS-DWR", "LogMem", "TrailsB", "MMSE", "CategoryFluency", "CDRSB", "FAQ"};

std::string_view outcome_name(Outcome outcome);
// Throws ConfigError for an unknown name.
Outcome outcome_from_name(std::string_view name);
constexpr int index(Outcome outcome) { return static_cast<int>(outcome); }

enum class Arm : int { Placebo = 0, Treatment = 1 };
enum class Subpopulation : int { Progressor = 0, Stable = 1 };
enum class Diagnosis : unsigned char { CN = 0, MciPlus = 1 };

}  // namespace padsim
