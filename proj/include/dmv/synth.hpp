#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "dmv/ingest.hpp"

namespace dmv {

// Planted noise-free target of the synthetic table:
//   base(question) + shift(stratification1) + 0.8 * (yearstart - 2015) + 1.5 * (latitude - 40)
// Returns NaN for an unknown question or stratification.
double synthetic_target(std::string_view question, std::string_view stratification1, double yearstart,
                        double latitude);

// Deterministic CDC-shaped table under cdc_default(). About 1% of the rows
// have no target; other gaps sit only in columns the target ignores.
RawTable synthesize_cdc(std::size_t rows, std::uint64_t seed);

}  // namespace dmv
