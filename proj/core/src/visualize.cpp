#include "vcce/visualize.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "vcce/errors.hpp"
#include "vcce/kv_config.hpp"
#include "vcce/text.hpp"

namespace vcce::viz {

std::vector<CombinedRow> prepare_data(std::span<const BeatCfSet> sets, const feat::FeatureMatrix& matrix) {
  std::set<std::pair<std::string, int>> known;
  for (const auto& p : matrix.provenance) known.insert({p.record_id, p.beat_index});

  std::vector<CombinedRow> rows;
  for (const auto& s : sets) {
    if (!known.count({s.record_id, s.beat_index})) {
      throw PreconditionError("prepare_data: counterfactuals reference unknown beat " + s.record_id + "#" +
                              std::to_string(s.beat_index));
    }
    std::map<std::string, int64_t> counts;
    for (const auto& item : s.set->items) {
      for (const auto& [name, delta] : item.changed) ++counts[name];
    }
    for (const auto& [name, count] : counts) {
      rows.push_back({s.record_id, s.beat_index, name, count, static_cast<int64_t>(s.set->items.size())});
    }
  }
  return rows;
}

MarkingsBundle build_markings(std::span<const CombinedRow> combined, const EcgRecord& denoised,
                              const FiducialSet& fiducials, int feature_count) {
  MarkingsBundle bundle;
  bundle.feature_count = feature_count;
  for (const auto& row : combined) {
    if (row.change_count <= 0) continue;
    const auto decoded = feat::decode_feature_name(row.feature);
    if (!feat::is_renderable(decoded)) continue;  // temporal features carry no lead/wave location
    if (row.beat_index < 0 || row.beat_index >= static_cast<int>(fiducials.beats.size())) {
      bundle.skipped.push_back(row.feature + "@beat" + std::to_string(row.beat_index) + ": no such beat");
      continue;
    }
    const auto& leadf = fiducials.beats[row.beat_index].leads[decoded.lead];
    const auto& signal = denoised.signals[decoded.lead];

    Marking m;
    m.lead = decoded.lead;
    m.beat_index = row.beat_index;
    m.kind = decoded.amplitude_kind;
    m.render = feat::render_kind(decoded.amplitude_kind);
    m.frequency_count = row.change_count;
    m.out_of = std::max<int64_t>(row.out_of, 1);
    m.emphasis = static_cast<double>(m.frequency_count) / static_cast<double>(m.out_of);
    m.feature_name = row.feature;

    auto need = [&](Fiducial f) -> std::optional<int64_t> {
      const auto v = leadf.get(f);
      if (!v) {
        bundle.skipped.push_back(row.feature + "@beat" + std::to_string(row.beat_index) + ": " +
                                 fiducial_name(f) + " undetected");
      }
      return v;
    };

    switch (m.render) {
      case feat::RenderKind::kPeak: {
        static constexpr Fiducial peak_of[] = {kRPeak, kPPeak, kQPeak, kSPeak, kTPeak};
        const auto anchor = need(peak_of[static_cast<int>(m.kind)]);
        if (!anchor) continue;
        m.anchor_a = *anchor;
        break;
      }
      case feat::RenderKind::kPairLine: {
        const auto [fa, fb] = feat::pair_anchors(m.kind);
        const auto a = need(fa);
        const auto b = need(fb);
        if (!a || !b) continue;
        m.anchor_a = *a;
        m.anchor_b = *b;
        m.value_overlay = signal[*a] - signal[*b];  // the beat's measured difference
        break;
      }
      case feat::RenderKind::kSegment: {
        const auto a = need(kROffset);
        const auto b = need(kTOnset);
        if (!a || !b) continue;
        if (*a >= *b) {
          bundle.skipped.push_back(row.feature + "@beat" + std::to_string(row.beat_index) + ": empty ST segment");
          continue;
        }
        m.anchor_a = *a;
        m.anchor_b = *b;
        break;
      }
    }
    bundle.markings.push_back(std::move(m));
  }

  std::sort(bundle.markings.begin(), bundle.markings.end(), [](const Marking& a, const Marking& b) {
    if (a.lead != b.lead) return a.lead < b.lead;
    if (a.beat_index != b.beat_index) return a.beat_index < b.beat_index;
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    return a.feature_name < b.feature_name;
  });
  // A feature maps to one (lead, kind, beat) triple; drop accidental repeats.
  bundle.markings.erase(std::unique(bundle.markings.begin(), bundle.markings.end(),
                                    [](const Marking& a, const Marking& b) {
                                      return a.lead == b.lead && a.beat_index == b.beat_index && a.kind == b.kind;
                                    }),
                        bundle.markings.end());
  return bundle;
}

ReportLayout ReportLayout::from_file(const std::string& path) {
  const KvConfig kv = KvConfig::from_file(path);
  ReportLayout l;
  l.rows = static_cast<int>(kv.get_int("layout.rows", l.rows));
  l.cols = static_cast<int>(kv.get_int("layout.cols", l.cols));
  l.mm_per_mv = kv.get_double("layout.mm_per_mv", l.mm_per_mv);
  l.mm_per_second = kv.get_double("layout.mm_per_second", l.mm_per_second);
  l.row_height_mm = kv.get_double("layout.row_height_mm", l.row_height_mm);
  l.margin_mm = kv.get_double("layout.margin_mm", l.margin_mm);
  l.grid = kv.get_bool("layout.grid", l.grid);
  l.color_trace = kv.get("layout.color_trace", l.color_trace);
  l.color_marking = kv.get("layout.color_marking", l.color_marking);
  l.color_grid = kv.get("layout.color_grid", l.color_grid);
  l.color_text = kv.get("layout.color_text", l.color_text);
  return l;
}

std::string ReportLayout::dump() const {
  KvConfig kv;
  kv.set("layout.rows", std::to_string(rows));
  kv.set("layout.cols", std::to_string(cols));
  kv.set("layout.mm_per_mv", format_double(mm_per_mv));
  kv.set("layout.mm_per_second", format_double(mm_per_second));
  kv.set("layout.row_height_mm", format_double(row_height_mm));
  kv.set("layout.margin_mm", format_double(margin_mm));
  kv.set("layout.grid", grid ? "on" : "off");
  kv.set("layout.color_trace", color_trace);
  kv.set("layout.color_marking", color_marking);
  kv.set("layout.color_grid", color_grid);
  kv.set("layout.color_text", color_text);
  return kv.dump();
}

namespace {

constexpr double kMmPerPx = 25.4 / 96.0;  // CSS pixel at 96 dpi

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 3); }

// Emphasis controls stroke weight and opacity jointly; both grow strictly
// with selection frequency.
double stroke_mm(double emphasis) { return (1.0 + 2.0 * emphasis) * kMmPerPx; }
std::string opacity(double emphasis) { return format_fixed(0.35 + 0.65 * emphasis, 3); }

}  // namespace

std::string render_report(const EcgRecord& record, std::span<const Marking> markings,
                          const ReportLayout& layout) {
  if (layout.mm_per_mv <= 0 || layout.mm_per_second <= 0 || layout.row_height_mm <= 0 || layout.rows <= 0 ||
      layout.cols <= 0) {
    throw PreconditionError("render_report: layout scales must be positive");
  }
  const double fs = record.fs();
  const auto n = record.n_samples();
  const double duration_s = static_cast<double>(n) / fs;
  const int per_col = (kNumLeads + layout.cols - 1) / layout.cols;
  const double panel_w = duration_s * layout.mm_per_second;
  const double width = 2 * layout.margin_mm + layout.cols * panel_w + (layout.cols - 1) * layout.margin_mm;
  const double legend_h = 8.0 + 4.0 * static_cast<double>(markings.size());
  const double height = 2 * layout.margin_mm + per_col * layout.row_height_mm + legend_h;

  const auto base_x = [&](int lead) {
    return layout.margin_mm + (lead / per_col) * (panel_w + layout.margin_mm);
  };
  const auto base_y = [&](int lead) {
    return layout.margin_mm + (lead % per_col) * layout.row_height_mm + layout.row_height_mm * 0.5;
  };
  const auto px = [&](int lead, int64_t sample) {
    return base_x(lead) + static_cast<double>(sample) / fs * layout.mm_per_second;
  };
  const auto py = [&](int lead, double mv) { return base_y(lead) - mv * layout.mm_per_mv; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "mm\" height=\"" + num(height) +
         "mm\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) + "\" fill=\"#ffffff\"/>\n";

  if (layout.grid) {
    // 5 mm major grid over the trace area, one path element.
    const double gx0 = layout.margin_mm;
    const double gy0 = layout.margin_mm;
    const double gx1 = width - layout.margin_mm;
    const double gy1 = gy0 + per_col * layout.row_height_mm;
    std::string d;
    for (double x = gx0; x <= gx1 + 1e-9; x += 5.0) {
      d += "M" + num(x) + " " + num(gy0) + "V" + num(gy1);
    }
    for (double y = gy0; y <= gy1 + 1e-9; y += 5.0) {
      d += "M" + num(gx0) + " " + num(y) + "H" + num(gx1);
    }
    svg += "<path d=\"" + d + "\" stroke=\"" + layout.color_grid + "\" stroke-width=\"" + num(0.12) +
           "\" fill=\"none\"/>\n";
  }

  for (int lead = 0; lead < kNumLeads; ++lead) {
    svg += "<text x=\"" + num(base_x(lead) + 1.0) + "\" y=\"" + num(base_y(lead) - layout.row_height_mm * 0.32) +
           "\" font-family=\"monospace\" font-size=\"3\" fill=\"" + layout.color_text + "\">" +
           xml_escape(kLeadNames[lead]) + "</text>\n";
    std::string points;
    const auto& sig = record.signals[lead];
    for (int64_t i = 0; i < n; ++i) {
      if (i) points += ' ';
      points += num(px(lead, i)) + "," + num(py(lead, sig[i]));
    }
    svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + layout.color_trace +
           "\" stroke-width=\"0.2\"/>\n";
  }

  for (const auto& m : markings) {
    const auto& sig = record.signals[m.lead];
    const std::string sw = num(stroke_mm(m.emphasis));
    const std::string op = opacity(m.emphasis);
    switch (m.render) {
      case feat::RenderKind::kPeak: {
        const double cx = px(m.lead, m.anchor_a);
        const double cy = py(m.lead, sig[m.anchor_a]);
        svg += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"1.2\" fill=\"none\" stroke=\"" +
               layout.color_marking + "\" stroke-width=\"" + sw + "\" stroke-opacity=\"" + op + "\"/>\n";
        break;
      }
      case feat::RenderKind::kPairLine: {
        const double x1 = px(m.lead, m.anchor_a);
        const double y1 = py(m.lead, sig[m.anchor_a]);
        const double x2 = px(m.lead, m.anchor_b);
        const double y2 = py(m.lead, sig[m.anchor_b]);
        svg += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
               "\" stroke=\"" + layout.color_marking + "\" stroke-width=\"" + sw + "\" stroke-opacity=\"" + op +
               "\" stroke-dasharray=\"1,0.8\"/>\n";
        if (m.value_overlay) {
          svg += "<text x=\"" + num((x1 + x2) / 2 + 0.8) + "\" y=\"" + num((y1 + y2) / 2) +
                 "\" font-family=\"monospace\" font-size=\"2.2\" fill=\"" + layout.color_marking + "\">" +
                 xml_escape(format_fixed(*m.value_overlay, 3) + " mV") + "</text>\n";
        }
        break;
      }
      case feat::RenderKind::kSegment: {
        const double x1 = px(m.lead, m.anchor_a);
        const double x2 = px(m.lead, m.anchor_b);
        const double band = 4.0;
        svg += "<rect x=\"" + num(x1) + "\" y=\"" + num(base_y(m.lead) - band / 2) + "\" width=\"" +
               num(x2 - x1) + "\" height=\"" + num(band) + "\" fill=\"" + layout.color_marking +
               "\" fill-opacity=\"" + num(0.12 + 0.3 * m.emphasis) + "\"/>\n";
        break;
      }
    }
  }

  // Legend: every marked feature with its selection frequency.
  double ly = layout.margin_mm + per_col * layout.row_height_mm + 6.0;
  svg += "<text x=\"" + num(layout.margin_mm) + "\" y=\"" + num(ly) +
         "\" font-family=\"monospace\" font-size=\"2.6\" fill=\"" + layout.color_text +
         "\">marked features</text>\n";
  for (const auto& m : markings) {
    ly += 4.0;
    svg += "<text x=\"" + num(layout.margin_mm + 2.0) + "\" y=\"" + num(ly) +
           "\" font-family=\"monospace\" font-size=\"2.4\" fill=\"" + layout.color_text + "\">" +
           xml_escape(m.feature_name + " beat " + std::to_string(m.beat_index) + " " +
                      std::to_string(m.frequency_count) + "/" + std::to_string(m.out_of)) +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace vcce::viz
