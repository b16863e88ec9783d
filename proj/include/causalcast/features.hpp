#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace causalcast {

enum class FeatureMethod { GC, PCMCIplus, DPCMCIplus, All };

std::string_view to_string(FeatureMethod m);
FeatureMethod parse_feature_method(std::string_view text);

/// Input columns for one forecaster. The target is always a member.
struct FeatureSet {
  FeatureMethod method = FeatureMethod::All;
  std::vector<std::string> features;
};

/// Orders `chosen` ∪ {target} by `column_order`, dropping unknown names.
FeatureSet make_feature_set(FeatureMethod method, std::span<const std::string> column_order,
                            const std::string& target, const std::set<std::string>& chosen);

}  // namespace causalcast
