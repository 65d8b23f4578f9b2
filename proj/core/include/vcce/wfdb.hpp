#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"

namespace vcce::io {

// Parses a WFDB header: first line `name n_sig fs n_samples`, then one
// signal-spec line per signal (`file format gain(baseline)/units ... description`).
// The lead name is the trailing description token of each signal line.
RecordHeader parse_wfdb_header(const std::string& text);

// WFDB storage format 16: little-endian 16-bit two's-complement samples,
// multiplexed one sample per signal per frame. Output is per-signal millivolt
// traces of length byte_count / (2 * n_signals).
std::vector<std::vector<double>> decode_signal_format16(const std::vector<uint8_t>& bytes,
                                                        const std::vector<SignalSpec>& specs);

// Loads a `.hea`/`.dat` pair. `path` may point at the header file or be the
// record name without extension. Only storage format 16 is supported; other
// formats raise "unsupported format".
EcgRecord load_wfdb_record(const std::string& path);

// CSV fallback: header row of the 12 lead names, one row per sample, mV.
// The sampling rate comes from a `<record>.meta` sidecar (`fs = N`) unless
// `fs_override` > 0.
EcgRecord load_record_csv(const std::string& path, double fs_override = 0.0);

void write_record_csv(const std::string& path, const EcgRecord& record);

// Dispatches on extension (.hea/.dat -> WFDB, .csv -> CSV fallback).
EcgRecord load_record(const std::string& path, double fs_override = 0.0);

}  // namespace vcce::io
