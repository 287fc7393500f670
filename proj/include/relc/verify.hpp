#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "relc/config.hpp"

namespace relc {

// ---------------------------------------------------------------------------
// Self-check suite: every module invariant gets a named check with the
// observed value, the expectation, and the tolerance it was held to.
// Negative controls deliberately tamper with one ingredient (noise variance,
// drift term, diffusion term, reweighting) and pass only when the matching
// check fails under the tamper — so a silent regression in a check itself
// is caught too.
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    double observed = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    std::string note;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool all_pass() const;
    nlohmann::ordered_json to_json() const;
};

VerifyReport verify_all(const RunConfig& config);

// Just the exact-record-oracle checks (operator algebra, record/field match,
// oracle weight agreement, drift quadrature) — the `oracle` subcommand's core.
VerifyReport verify_oracle();

} // namespace relc
