#pragma once

#include <string>

#include "kcobra/aggregator.hpp"

namespace kcobra {

//! Writes the fitted aggregator as a versioned JSON container: kernel token,
//! parametrization, bandwidth, normalization bounds, and the full retained
//! prediction matrix. Numbers round-trip bitwise.
void save_model(const std::string& path, const AggregatorModel& model);

//! Rejects files whose format tag or version does not match, or whose
//! contents fail the aggregator's validity checks.
AggregatorModel load_model(const std::string& path);

}  // namespace kcobra
