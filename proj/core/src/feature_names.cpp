#include "vcce/feature_names.hpp"

#include <map>

#include "vcce/errors.hpp"

namespace vcce::feat {

const std::array<const char*, kNumTemporal>& temporal_kind_names() {
  static const std::array<const char*, kNumTemporal> names = {
      "RR_Prev", "RR_Next", "RR_Rate", "PR_int", "PR_seg", "QRS", "P_Wave",
      "T_Wave",  "T_left",  "QT",      "QTc",    "ST",     "PT",  "PS"};
  return names;
}

const std::array<const char*, kNumAmplitude>& amplitude_kind_names() {
  static const std::array<const char*, kNumAmplitude> names = {
      "R", "P", "Q", "S", "T", "PQ", "QR", "RS", "ST", "PS", "PT", "QS", "QT", "ST_mean", "ST_std"};
  return names;
}

const std::vector<std::string>& feature_registry() {
  static const std::vector<std::string> registry = [] {
    std::vector<std::string> names;
    names.reserve(kNumFeatures);
    for (const char* t : temporal_kind_names()) names.emplace_back(t);
    for (int lead = 0; lead < kNumLeads; ++lead) {
      for (const char* a : amplitude_kind_names()) {
        names.push_back(std::string(kLeadNames[lead]) + "_" + a);
      }
    }
    return names;
  }();
  return registry;
}

int feature_index(const std::string& name) {
  static const std::map<std::string, int> index = [] {
    std::map<std::string, int> m;
    const auto& reg = feature_registry();
    for (size_t i = 0; i < reg.size(); ++i) m[reg[i]] = static_cast<int>(i);
    return m;
  }();
  auto it = index.find(name);
  return it == index.end() ? -1 : it->second;
}

DecodedFeature decode_feature_name(const std::string& name) {
  const int idx = feature_index(name);
  if (idx < 0) throw PreconditionError("unknown feature name: " + name);
  DecodedFeature d;
  if (idx < kNumTemporal) {
    d.temporal = true;
    d.temporal_kind = static_cast<TemporalKind>(idx);
    return d;
  }
  const int a = idx - kNumTemporal;
  d.temporal = false;
  d.lead = a / kNumAmplitude;
  d.amplitude_kind = static_cast<AmplitudeKind>(a % kNumAmplitude);
  return d;
}

std::string encode_feature_name(const DecodedFeature& decoded) {
  if (decoded.temporal) return temporal_kind_names()[static_cast<int>(decoded.temporal_kind)];
  if (decoded.lead < 0 || decoded.lead >= kNumLeads) {
    throw PreconditionError("encode_feature_name: lead index out of range");
  }
  return std::string(kLeadNames[decoded.lead]) + "_" +
         amplitude_kind_names()[static_cast<int>(decoded.amplitude_kind)];
}

bool is_renderable(const DecodedFeature& decoded) { return !decoded.temporal; }

RenderKind render_kind(AmplitudeKind kind) {
  switch (kind) {
    case AmplitudeKind::kR:
    case AmplitudeKind::kP:
    case AmplitudeKind::kQ:
    case AmplitudeKind::kS:
    case AmplitudeKind::kT:
      return RenderKind::kPeak;
    case AmplitudeKind::kStMean:
    case AmplitudeKind::kStStd:
      return RenderKind::kSegment;
    default:
      return RenderKind::kPairLine;
  }
}

std::pair<Fiducial, Fiducial> pair_anchors(AmplitudeKind kind) {
  switch (kind) {
    case AmplitudeKind::kPq: return {kPPeak, kQPeak};
    case AmplitudeKind::kQr: return {kQPeak, kRPeak};
    case AmplitudeKind::kRs: return {kRPeak, kSPeak};
    case AmplitudeKind::kSt: return {kSPeak, kTPeak};
    case AmplitudeKind::kPs: return {kPPeak, kSPeak};
    case AmplitudeKind::kPt: return {kPPeak, kTPeak};
    case AmplitudeKind::kQs: return {kQPeak, kSPeak};
    case AmplitudeKind::kQt: return {kQPeak, kTPeak};
    default:
      throw PreconditionError("pair_anchors: not a pairwise amplitude kind");
  }
}

}  // namespace vcce::feat
