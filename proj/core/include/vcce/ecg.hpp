#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vcce {

inline constexpr int kNumLeads = 12;

// Standard 12-lead order. Everything downstream indexes leads by this order.
inline constexpr std::array<const char*, kNumLeads> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

// -1 when the name is not one of the 12 leads.
int lead_index(const std::string& name);

enum class DiagnosisClass { kNorm, kMi };

std::string to_string(DiagnosisClass c);

struct RecordLabel {
  DiagnosisClass cls = DiagnosisClass::kNorm;
  std::string subtype;  // resolved SCP code, e.g. "IMI"; "NORM" for controls
};

struct SignalSpec {
  std::string file_name;
  int storage_format = 0;
  double gain = 0.0;      // ADC units per millivolt
  double baseline = 0.0;  // ADC units at 0 mV
  std::string units;
  std::string lead_name;
};

struct RecordHeader {
  std::string record_name;
  int n_signals = 0;
  double sampling_rate = 0.0;  // Hz
  int64_t n_samples = 0;
  std::vector<SignalSpec> signals;
};

struct EcgRecord {
  RecordHeader header;
  // signals[lead][sample], millivolts, in kLeadNames order.
  std::vector<std::vector<double>> signals;
  RecordLabel label;
  std::string patient_id;

  double fs() const { return header.sampling_rate; }
  int64_t n_samples() const {
    return signals.empty() ? 0 : static_cast<int64_t>(signals[0].size());
  }
};

// Fiducial slots in temporal order. The order is load-bearing: delineation
// enforces strictly increasing indices along this sequence.
enum Fiducial : int {
  kPOnset = 0,
  kPPeak,
  kPOffset,
  kQPeak,
  kROnset,
  kRPeak,
  kROffset,
  kSPeak,
  kTOnset,
  kTPeak,
  kTOffset,
  kNumFiducials
};

const char* fiducial_name(Fiducial f);

// Per-lead landmark indices for one beat. Absent means undetected; zeros are
// valid sample indices, so absence is never encoded as a sentinel value.
struct LeadFiducials {
  std::array<std::optional<int64_t>, kNumFiducials> idx;

  std::optional<int64_t> get(Fiducial f) const { return idx[f]; }
  void set(Fiducial f, int64_t v) { idx[f] = v; }
};

struct BeatFiducials {
  int beat_index = 0;         // ordinal among retained beats
  int64_t r_peak_global = 0;  // shared R anchor on the reference lead
  std::array<LeadFiducials, kNumLeads> leads;
};

struct FiducialSet {
  int reference_lead = 1;  // lead II unless detection fell back
  std::vector<BeatFiducials> beats;
};

struct BeatWindow {
  int beat_index = 0;
  int64_t r_peak_global = 0;
  int64_t start = 0;  // inclusive
  int64_t end = 0;    // exclusive
};

}  // namespace vcce
