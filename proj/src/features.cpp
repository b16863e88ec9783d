#include "causalcast/features.hpp"

#include "causalcast/error.hpp"

namespace causalcast {

std::string_view to_string(FeatureMethod m) {
  switch (m) {
    case FeatureMethod::GC: return "GC";
    case FeatureMethod::PCMCIplus: return "PCMCIplus";
    case FeatureMethod::DPCMCIplus: return "DPCMCIplus";
    case FeatureMethod::All: return "vanilla";
  }
  return "vanilla";
}

FeatureMethod parse_feature_method(std::string_view text) {
  if (text == "GC" || text == "gc" || text == "mvgc") return FeatureMethod::GC;
  if (text == "PCMCIplus" || text == "pcmci+" || text == "PCMCI+") return FeatureMethod::PCMCIplus;
  if (text == "DPCMCIplus" || text == "dpcmci+" || text == "DPCMCI+") return FeatureMethod::DPCMCIplus;
  if (text == "vanilla" || text == "All" || text == "all") return FeatureMethod::All;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + std::string(text) + "'");
}

FeatureSet make_feature_set(FeatureMethod method, std::span<const std::string> column_order,
                            const std::string& target, const std::set<std::string>& chosen) {
  FeatureSet fs{method, {}};
  for (const auto& name : column_order) {
    if (name == target || chosen.count(name) > 0) fs.features.push_back(name);
  }
  return fs;
}

}  // namespace causalcast
