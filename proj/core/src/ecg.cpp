#include "vcce/ecg.hpp"

namespace vcce {

int lead_index(const std::string& name) {
  for (int i = 0; i < kNumLeads; ++i) {
    if (name == kLeadNames[i]) return i;
  }
  return -1;
}

std::string to_string(DiagnosisClass c) { return c == DiagnosisClass::kNorm ? "NORM" : "MI"; }

const char* fiducial_name(Fiducial f) {
  static constexpr std::array<const char*, kNumFiducials> names = {
      "P_onset", "P_peak", "P_offset", "Q_peak",  "R_onset", "R_peak",
      "R_offset", "S_peak", "T_onset", "T_peak", "T_offset"};
  return names[f];
}

}  // namespace vcce
