#ifndef SMOOTHATTN_REPORT_IO_HPP
#define SMOOTHATTN_REPORT_IO_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "smoothattn/common.hpp"
#include "smoothattn/data.hpp"
#include "smoothattn/metrics.hpp"

namespace smoothattn {

// ---------------------------------------------------------------------------
// Per-variant run report: one CSV row per (run, case).
// ---------------------------------------------------------------------------

inline constexpr const char* kReportHeader =
    "variant,seed,dataset,case,scenes,ade,fde,ade_main,fde_main,rear_attention_correctness";

inline void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream out(path);
    check(out.good(), "write_report_csv: cannot open '", path, "' for writing");
    out << kReportHeader << '\n';
    char buf[512];
    for (const RunRecord& r : report.runs) {
        for (const auto& [label, c] : r.result.by_case) {
            std::snprintf(buf, sizeof(buf), "%s,%llu,%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          report.variant.c_str(), static_cast<unsigned long long>(r.seed),
                          r.result.dataset_tag.c_str(), label.c_str(), c.scenes, c.ade, c.fde,
                          c.ade_main, c.fde_main, r.result.rear_attention_correctness);
            out << buf;
        }
    }
    check(out.good(), "write_report_csv: write failure on '", path, "'");
}

inline MetricReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "read_report_csv: cannot open '", path, "'");
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "read_report_csv: '", path, "' is empty");
    check(detail::strip_cr(line) == kReportHeader, "read_report_csv: ", path,
          ": unrecognized header '", line, "'");
    MetricReport report;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        auto f = detail::split_fields(line);
        check(f.size() == 10, "read_report_csv: ", path, ":", lineno,
              ": expected 10 fields, got ", f.size());
        if (report.variant.empty())
            report.variant = f[0];
        else
            check(report.variant == f[0], "read_report_csv: ", path, ":", lineno,
                  ": mixed variants '", report.variant, "' and '", f[0], "'");
        std::uint64_t seed = detail::parse_u64(f[1], path, static_cast<int>(lineno), "seed");
        if (report.runs.empty() || report.runs.back().seed != seed) {
            report.runs.push_back(RunRecord{seed, {}});
            report.runs.back().result.dataset_tag = f[2];
        } else {
            check(report.runs.back().result.dataset_tag == f[2], "read_report_csv: ", path,
                  ":", lineno, ": run ", seed, " spans two datasets");
        }
        EvalResult& res = report.runs.back().result;
        EvalCase& c = res.case_entry(f[3]);
        c.scenes = static_cast<int>(detail::parse_long(f[4], path, static_cast<int>(lineno), "scenes"));
        c.ade = detail::parse_double(f[5], path, static_cast<int>(lineno), "ade");
        c.fde = detail::parse_double(f[6], path, static_cast<int>(lineno), "fde");
        c.ade_main = detail::parse_double(f[7], path, static_cast<int>(lineno), "ade_main");
        c.fde_main = detail::parse_double(f[8], path, static_cast<int>(lineno), "fde_main");
        res.rear_attention_correctness =
            detail::parse_double(f[9], path, static_cast<int>(lineno), "rear_attention_correctness");
    }
    check(!report.runs.empty(), "read_report_csv: '", path, "' has no data rows");
    return report;
}

// ---------------------------------------------------------------------------
// Human-readable tables
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

inline std::string mean_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return fixed4(mean_of(xs));
    return fixed4(mean_of(xs)) + " +- " + fixed4(std_of(xs));
}

inline void append_row(std::string& out, const std::vector<std::string>& cells,
                       const std::vector<std::size_t>& widths) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out += cells[i];
        if (i + 1 < cells.size())
            out.append(widths[i] > cells[i].size() ? widths[i] - cells[i].size() + 2 : 2, ' ');
    }
    out += '\n';
}

inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (const auto& row : rows) append_row(out, row, widths);
    return out;
}

}  // namespace detail

// Aligned mean +- std table of one variant's runs.
inline std::string format_report(const MetricReport& report) {
    check(!report.runs.empty(), "format_report: report has no runs");
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"variant", "case", "runs", "ade", "fde", "ade_main", "fde_main"});
    for (const auto& [label, first] : report.runs.front().result.by_case) {
        (void)first;
        rows.push_back({report.variant, label, std::to_string(report.runs.size()),
                        detail::mean_std(report.raw(label, "ade")),
                        detail::mean_std(report.raw(label, "fde")),
                        detail::mean_std(report.raw(label, "ade_main")),
                        detail::mean_std(report.raw(label, "fde_main"))});
    }
    std::string out = detail::render_table(rows);
    std::vector<double> corr;
    for (const RunRecord& r : report.runs)
        if (r.result.rear_attention_correctness >= 0.0)
            corr.push_back(r.result.rear_attention_correctness);
    if (!corr.empty())
        out += "rear-main in-window attention correctness: " + detail::mean_std(corr) + "\n";
    return out;
}

// Aligned cross-variant table with Welch p-values where available.
inline std::string format_comparison(const Comparison& cmp) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"variant"};
    for (const std::string& label : cmp.case_labels) {
        head.push_back(label + " ade");
        head.push_back(label + " fde");
    }
    rows.push_back(head);
    for (const auto& [variant, cells] : cmp.rows) {
        std::vector<std::string> row{variant == "correct" ? variant + " (oracle)" : variant};
        for (const ComparisonCell& c : cells) {
            row.push_back(detail::fixed4(c.ade_mean) + " +- " + detail::fixed4(c.ade_std));
            row.push_back(detail::fixed4(c.fde_mean) + " +- " + detail::fixed4(c.fde_std));
        }
        rows.push_back(row);
    }
    std::string out = detail::render_table(rows);
    for (const auto& [label, p] : cmp.p_ade) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "p(ours vs s_attn, %s ade) = %.6g\n", label.c_str(), p);
        out += buf;
    }
    return out;
}

inline void write_comparison_csv(const std::string& path, const Comparison& cmp) {
    std::ofstream out(path);
    check(out.good(), "write_comparison_csv: cannot open '", path, "' for writing");
    out << "variant";
    for (const std::string& label : cmp.case_labels)
        out << ',' << label << "_ade_mean," << label << "_ade_std," << label << "_fde_mean,"
            << label << "_fde_std";
    out << '\n';
    char buf[128];
    for (const auto& [variant, cells] : cmp.rows) {
        out << variant;
        for (const ComparisonCell& c : cells) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g", c.ade_mean, c.ade_std,
                          c.fde_mean, c.fde_std);
            out << buf;
        }
        out << '\n';
    }
    for (const auto& [label, p] : cmp.p_ade) {
        std::snprintf(buf, sizeof(buf), "p_ade_ours_vs_s_attn,%s,%.17g\n", label.c_str(), p);
        out << buf;
    }
    check(out.good(), "write_comparison_csv: write failure on '", path, "'");
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_REPORT_IO_HPP
