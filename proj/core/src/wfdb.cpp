#include "vcce/wfdb.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>

#include "vcce/csv.hpp"
#include "vcce/errors.hpp"
#include "vcce/kv_config.hpp"
#include "vcce/text.hpp"

namespace vcce::io {

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Gain token: `gain(baseline)/units`, baseline and units optional.
void parse_gain_spec(const std::string& tok, int line_no, SignalSpec& spec) {
  std::string gain_part = tok;
  const auto slash = gain_part.find('/');
  if (slash != std::string::npos) {
    spec.units = gain_part.substr(slash + 1);
    gain_part = gain_part.substr(0, slash);
  }
  const auto paren = gain_part.find('(');
  if (paren != std::string::npos) {
    const auto close = gain_part.find(')', paren);
    if (close == std::string::npos) {
      throw ParseError("header line " + std::to_string(line_no) + ": unterminated baseline in gain '" + tok + "'");
    }
    const auto baseline = parse_double(gain_part.substr(paren + 1, close - paren - 1));
    if (!baseline) {
      throw ParseError("header line " + std::to_string(line_no) + ": unparseable baseline in '" + tok + "'");
    }
    spec.baseline = *baseline;
    gain_part = gain_part.substr(0, paren);
  }
  const auto gain = parse_double(gain_part);
  if (!gain) {
    throw ParseError("header line " + std::to_string(line_no) + ": unparseable gain '" + tok + "'");
  }
  if (*gain <= 0) {
    throw ParseError("header line " + std::to_string(line_no) + ": gain must be positive, got '" + tok + "'");
  }
  spec.gain = *gain;
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open signal file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

RecordHeader parse_wfdb_header(const std::string& text) {
  RecordHeader hdr;
  int line_no = 0;
  bool have_record_line = false;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto toks = tokens(line);
    if (!have_record_line) {
      if (toks.size() < 4) {
        throw ParseError("header line " + std::to_string(line_no) +
                         ": expected `name n_sig fs n_samples`, got '" + line + "'");
      }
      hdr.record_name = split(toks[0], '/')[0];
      const auto n_sig = parse_int(toks[1]);
      if (!n_sig || *n_sig <= 0) {
        throw ParseError("header line " + std::to_string(line_no) + ": bad signal count '" + toks[1] + "'");
      }
      // fs may carry a counter frequency suffix (`fs/counter`).
      const auto fs = parse_double(split(toks[2], '/')[0]);
      if (!fs || *fs <= 0) {
        throw ParseError("header line " + std::to_string(line_no) + ": missing or non-positive sampling rate '" +
                         toks[2] + "'");
      }
      const auto n_samples = parse_int(toks[3]);
      if (!n_samples || *n_samples < 0) {
        throw ParseError("header line " + std::to_string(line_no) + ": bad sample count '" + toks[3] + "'");
      }
      hdr.n_signals = static_cast<int>(*n_sig);
      hdr.sampling_rate = *fs;
      hdr.n_samples = *n_samples;
      have_record_line = true;
      continue;
    }
    if (toks.size() < 4) {
      throw ParseError("header line " + std::to_string(line_no) + ": truncated signal spec '" + line + "'");
    }
    SignalSpec spec;
    spec.file_name = toks[0];
    // Format may carry xN/:skew/+offset suffixes; the leading integer is the format.
    {
      size_t i = 0;
      while (i < toks[1].size() && (std::isdigit(static_cast<unsigned char>(toks[1][i])) || toks[1][i] == '-')) ++i;
      const auto fmt = parse_int(toks[1].substr(0, i));
      if (!fmt) {
        throw ParseError("header line " + std::to_string(line_no) + ": bad storage format '" + toks[1] + "'");
      }
      spec.storage_format = static_cast<int>(*fmt);
    }
    parse_gain_spec(toks[2], line_no, spec);
    spec.lead_name = toks.back();
    hdr.signals.push_back(std::move(spec));
  }
  if (!have_record_line) throw ParseError("header: no record line found");
  if (static_cast<int>(hdr.signals.size()) != hdr.n_signals) {
    throw ParseError("header: record line declares " + std::to_string(hdr.n_signals) + " signals but " +
                     std::to_string(hdr.signals.size()) + " signal lines follow");
  }
  return hdr;
}

std::vector<std::vector<double>> decode_signal_format16(const std::vector<uint8_t>& bytes,
                                                        const std::vector<SignalSpec>& specs) {
  const size_t n_sig = specs.size();
  if (n_sig == 0) throw PreconditionError("format 16 decode: no signal specs");
  const size_t frame_bytes = 2 * n_sig;
  if (bytes.size() % frame_bytes != 0) {
    const size_t offset = bytes.size() - bytes.size() % frame_bytes;
    throw ParseError("format 16 stream truncated mid-frame at byte offset " + std::to_string(offset));
  }
  const size_t n_frames = bytes.size() / frame_bytes;
  std::vector<std::vector<double>> out(n_sig);
  for (auto& v : out) v.resize(n_frames);
  for (size_t f = 0; f < n_frames; ++f) {
    for (size_t s = 0; s < n_sig; ++s) {
      const size_t at = (f * n_sig + s) * 2;
      const uint16_t lo = bytes[at];
      const uint16_t hi = bytes[at + 1];
      const auto raw = static_cast<int16_t>(static_cast<uint16_t>(lo | (hi << 8)));
      out[s][f] = (static_cast<double>(raw) - specs[s].baseline) / specs[s].gain;
    }
  }
  return out;
}

EcgRecord load_wfdb_record(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path hea(path);
  if (hea.extension() != ".hea") hea += ".hea";
  EcgRecord rec;
  rec.header = parse_wfdb_header(read_text_file(hea.string()));
  for (const auto& spec : rec.header.signals) {
    if (spec.storage_format != 16) {
      throw PreconditionError("unsupported format " + std::to_string(spec.storage_format) + " in " + hea.string() +
                              " (only WFDB format 16 is supported)");
    }
  }
  if (rec.header.n_signals != kNumLeads) {
    throw PreconditionError(hea.string() + ": expected 12 leads, header declares " +
                            std::to_string(rec.header.n_signals));
  }
  // All PTB-XL signals live in one .dat; read it once.
  const std::string dat = (hea.parent_path() / rec.header.signals[0].file_name).string();
  auto decoded = decode_signal_format16(read_bytes(dat), rec.header.signals);

  rec.signals.assign(kNumLeads, {});
  std::array<bool, kNumLeads> seen{};
  for (size_t s = 0; s < decoded.size(); ++s) {
    const int li = lead_index(rec.header.signals[s].lead_name);
    if (li < 0) {
      throw ParseError(hea.string() + ": unknown lead name '" + rec.header.signals[s].lead_name + "'");
    }
    rec.signals[li] = std::move(decoded[s]);
    seen[li] = true;
  }
  for (int i = 0; i < kNumLeads; ++i) {
    if (!seen[i]) throw ParseError(hea.string() + ": lead " + std::string(kLeadNames[i]) + " missing");
  }
  return rec;
}

EcgRecord load_record_csv(const std::string& path, double fs_override) {
  const CsvTable t = read_csv_file(path);
  if (static_cast<int>(t.header.size()) != kNumLeads) {
    throw ParseError(path + ": expected 12 leads, got " + std::to_string(t.header.size()) + " columns");
  }
  std::array<int, kNumLeads> order{};
  for (int i = 0; i < kNumLeads; ++i) {
    int col = t.column(kLeadNames[i]);
    if (col < 0) throw ParseError(path + ": lead column '" + std::string(kLeadNames[i]) + "' missing");
    order[i] = col;
  }
  EcgRecord rec;
  rec.signals.assign(kNumLeads, std::vector<double>(t.rows.size()));
  for (size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw ParseError(path + ": row " + std::to_string(r + 2) + " has " + std::to_string(t.rows[r].size()) +
                       " cells, expected " + std::to_string(t.header.size()));
    }
    for (int i = 0; i < kNumLeads; ++i) {
      const auto v = parse_double(t.rows[r][order[i]]);
      if (!v) {
        throw ParseError(path + ": row " + std::to_string(r + 2) + ", lead " + kLeadNames[i] +
                         ": non-numeric cell '" + t.rows[r][order[i]] + "'");
      }
      rec.signals[i][r] = *v;
    }
  }
  double fs = fs_override;
  if (fs <= 0) {
    namespace stdfs = std::filesystem;
    stdfs::path meta(path);
    meta.replace_extension(".meta");
    if (!stdfs::exists(meta)) {
      throw PreconditionError(path + ": sampling rate unknown (no .meta sidecar and no override)");
    }
    fs = KvConfig::from_file(meta.string()).get_double("fs", 0.0);
    if (fs <= 0) throw ParseError(meta.string() + ": fs missing or non-positive");
  }
  rec.header.record_name = std::filesystem::path(path).stem().string();
  rec.header.n_signals = kNumLeads;
  rec.header.sampling_rate = fs;
  rec.header.n_samples = static_cast<int64_t>(t.rows.size());
  for (int i = 0; i < kNumLeads; ++i) {
    SignalSpec spec;
    spec.lead_name = kLeadNames[i];
    spec.gain = 1.0;
    spec.units = "mV";
    rec.header.signals.push_back(spec);
  }
  return rec;
}

void write_record_csv(const std::string& path, const EcgRecord& record) {
  std::string out;
  for (int i = 0; i < kNumLeads; ++i) {
    if (i) out += ',';
    out += kLeadNames[i];
  }
  out += '\n';
  const auto n = record.n_samples();
  for (int64_t r = 0; r < n; ++r) {
    for (int i = 0; i < kNumLeads; ++i) {
      if (i) out += ',';
      out += format_double(record.signals[i][r]);
    }
    out += '\n';
  }
  write_text_file_atomic(path, out);
  KvConfig meta;
  meta.set("fs", format_double(record.fs()));
  std::filesystem::path mp(path);
  mp.replace_extension(".meta");
  write_text_file_atomic(mp.string(), meta.dump());
}

EcgRecord load_record(const std::string& path, double fs_override) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") return load_record_csv(path, fs_override);
  return load_wfdb_record(path);
}

}  // namespace vcce::io
