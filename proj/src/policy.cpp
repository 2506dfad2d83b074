#include "adapt/policy.hpp"

#include <iostream>
#include <sstream>

#include "adapt/error.hpp"

namespace adapt {
namespace {

void check_unit_interval(double v, const char* name) {
    if (!(v > 0.0 && v <= 1.0)) {
        std::ostringstream os;
        os << name << " = " << v << " is outside (0, 1]";
        fail(ErrorKind::InvalidParameter, os.str());
    }
}

}  // namespace

void AdaptConfig::validate() const {
    check_unit_interval(a, "a (block-initial temperature)");
    check_unit_interval(b, "b (non-initial temperature)");
    check_unit_interval(top_p, "top-p");
}

AdaptConfig AdaptConfig::profile(std::string_view name) {
    if (name == "pass@k" || name == "passk") return pass_at_k_profile();
    if (name == "pass@1" || name == "pass1") return pass_at_1_profile();
    fail(ErrorKind::InvalidParameter,
         "unknown profile '" + std::string(name) + "' (expected pass@k or pass@1)");
}

AdaptPolicy::AdaptPolicy(AdaptConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.inverted()) {
        std::cerr << "warning: AdapT with a=" << cfg_.a << " < b=" << cfg_.b
                  << " samples block-initial tokens more greedily than the rest\n";
    }
}

std::string AdaptPolicy::describe() const {
    std::ostringstream os;
    os << "adapt(a=" << cfg_.a << ",b=" << cfg_.b << ")";
    return os.str();
}

TrackedAdaptPolicy make_adapt_policy(const AdaptConfig& cfg, const StructureTracker& tracker) {
    cfg.validate();
    if (!tracker.initialized()) {
        fail(ErrorKind::InvalidState, "structure tracker must be initialized with the prompt");
    }
    return TrackedAdaptPolicy(cfg, tracker);
}

}  // namespace adapt
