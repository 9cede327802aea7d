#include "weedout/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <utility>

#include <boost/math/distributions/students_t.hpp>

#include "weedout/csv.hpp"
#include "weedout/errors.hpp"

namespace weedout {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Key = std::pair<Arm, double>;
using Groups = std::map<Key, std::vector<const RunRecord*>>;

Groups group(std::span<const RunRecord> runs) {
    Groups g;
    for (const RunRecord& r : runs) {
        if (r.ok && !r.rows.empty()) g[{r.arm, r.eta}].push_back(&r);
    }
    return g;
}

std::vector<double> final_accuracies(const std::vector<const RunRecord*>& runs) {
    std::vector<double> xs;
    for (const RunRecord* r : runs) xs.push_back(r->final_row().test_accuracy);
    return xs;
}

std::string fmt(const char* pattern, double v) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

}  // namespace

double t_quantile_975(std::size_t df) {
    if (df == 0) throw InvalidArgument("t quantile needs at least one degree of freedom");
    const boost::math::students_t dist(static_cast<double>(df));
    return boost::math::quantile(dist, 0.975);
}

MeanCi mean_ci(std::span<const double> xs) {
    MeanCi out;
    double sum = 0.0;
    for (double x : xs) {
        if (!std::isfinite(x)) continue;
        sum += x;
        ++out.n;
    }
    if (out.n == 0) return {kNaN, kNaN, 0};
    out.mean = sum / static_cast<double>(out.n);
    if (out.n < 2) {
        out.half_width = kNaN;
        return out;
    }
    double ss = 0.0;
    for (double x : xs) {
        if (std::isfinite(x)) ss += (x - out.mean) * (x - out.mean);
    }
    const double n = static_cast<double>(out.n);
    const double s = std::sqrt(ss / (n - 1.0));
    out.half_width = t_quantile_975(out.n - 1) * s / std::sqrt(n);
    return out;
}

std::vector<AggregateRow> aggregate(std::span<const RunRecord> runs) {
    std::vector<AggregateRow> out;
    for (const auto& [key, members] : group(runs)) {
        std::size_t epochs = 0;
        for (const RunRecord* r : members) epochs = std::max(epochs, r->rows.size());
        for (std::size_t e = 0; e < epochs; ++e) {
            std::vector<double> te, tr, tel, trl;
            for (const RunRecord* r : members) {
                if (e >= r->rows.size()) continue;
                const EpochRow& row = r->rows[e];
                te.push_back(row.test_accuracy);
                tr.push_back(row.train_accuracy);
                tel.push_back(row.test_loss);
                trl.push_back(row.train_loss);
            }
            AggregateRow row;
            row.arm = key.first;
            row.eta = key.second;
            row.epoch = members.front()->rows.size() > e ? members.front()->rows[e].epoch : e + 1;
            row.n_runs = tr.size();
            row.test_accuracy = mean_ci(te);
            row.train_accuracy = mean_ci(tr);
            row.test_loss = mean_ci(tel);
            row.train_loss = mean_ci(trl);
            out.push_back(row);
        }
    }
    return out;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::consistent: return "consistent";
        case Verdict::weedout_advantage: return "weedout_advantage";
        case Verdict::weedout_deficit: return "weedout_deficit";
        case Verdict::insufficient: return "insufficient";
    }
    return "?";
}

std::vector<ArmComparison> compare_arms(std::span<const RunRecord> runs) {
    const Groups groups = group(runs);
    std::vector<ArmComparison> out;
    for (const auto& [key, members] : groups) {
        if (key.first != Arm::weedout) continue;
        const auto base = groups.find({Arm::random_baseline, key.second});
        if (base == groups.end()) continue;

        const auto w = final_accuracies(members);
        const auto b = final_accuracies(base->second);
        ArmComparison c;
        c.eta = key.second;
        c.weedout = mean_ci(w);
        c.baseline = mean_ci(b);
        c.difference = c.weedout.mean - c.baseline.mean;
        if (c.weedout.n < 2 || c.baseline.n < 2) {
            c.half_width = kNaN;
            c.verdict = Verdict::insufficient;
            out.push_back(c);
            continue;
        }
        auto sum_sq = [](const std::vector<double>& xs, double mean) {
            double ss = 0.0;
            for (double x : xs) {
                if (std::isfinite(x)) ss += (x - mean) * (x - mean);
            }
            return ss;
        };
        const double n1 = static_cast<double>(c.weedout.n);
        const double n2 = static_cast<double>(c.baseline.n);
        const std::size_t df = c.weedout.n + c.baseline.n - 2;
        const double pooled_var =
            (sum_sq(w, c.weedout.mean) + sum_sq(b, c.baseline.mean)) / static_cast<double>(df);
        c.half_width = t_quantile_975(df) * std::sqrt(pooled_var) * std::sqrt(1.0 / n1 + 1.0 / n2);
        if (c.difference > c.half_width) {
            c.verdict = Verdict::weedout_advantage;
        } else if (c.difference < -c.half_width) {
            c.verdict = Verdict::weedout_deficit;
        } else {
            c.verdict = Verdict::consistent;
        }
        out.push_back(c);
    }
    return out;
}

std::vector<MonotoneViolation> monotone_violations(std::span<const RunRecord> runs) {
    std::map<Arm, std::vector<std::pair<double, MeanCi>>> by_arm;
    for (const auto& [key, members] : group(runs)) {
        const auto xs = final_accuracies(members);
        by_arm[key.first].emplace_back(key.second, mean_ci(xs));
    }
    std::vector<MonotoneViolation> out;
    for (const auto& [arm, levels] : by_arm) {
        for (std::size_t i = 0; i < levels.size(); ++i) {
            for (std::size_t j = i + 1; j < levels.size(); ++j) {
                const MeanCi& lo = levels[i].second;
                const MeanCi& hi = levels[j].second;
                const double lo_ci = std::isnan(lo.half_width) ? 0.0 : lo.half_width;
                const double hi_ci = std::isnan(hi.half_width) ? 0.0 : hi.half_width;
                if (lo.mean + lo_ci < hi.mean - hi_ci) out.push_back({arm, levels[i].first, levels[j].first, lo, hi});
            }
        }
    }
    return out;
}

LoadedSweep load_sweep(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
    std::vector<std::filesystem::path> cells;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory()) cells.push_back(entry.path());
    }
    std::sort(cells.begin(), cells.end());
    LoadedSweep out;
    for (const auto& cell : cells) {
        if (!std::filesystem::exists(cell / "manifest.json")) {
            out.skipped.push_back(cell.filename().string() + ": incomplete");
            continue;
        }
        try {
            out.runs.push_back(load_run(cell));
        } catch (const Error& e) {
            out.skipped.push_back(cell.filename().string() + ": " + e.what());
        }
    }
    return out;
}

std::string aggregate_csv(std::span<const AggregateRow> rows) {
    using csv::format_double;
    std::string out(kAggregateHeader);
    out += '\n';
    for (const AggregateRow& r : rows) {
        out += std::string(to_string(r.arm)) + ',' + format_double(r.eta) + ',' + std::to_string(r.epoch) + ',' +
               std::to_string(r.n_runs);
        for (const MeanCi* m : {&r.test_accuracy, &r.train_accuracy, &r.test_loss, &r.train_loss}) {
            out += ',' + format_double(m->mean) + ',' + format_double(m->half_width);
        }
        out += '\n';
    }
    return out;
}

std::string plot_csv(std::span<const AggregateRow> rows) {
    using csv::format_double;
    std::string out(kPlotHeader);
    out += '\n';
    for (const AggregateRow& r : rows) {
        const std::pair<const char*, const MeanCi*> metrics[] = {{"test_accuracy", &r.test_accuracy},
                                                                 {"train_accuracy", &r.train_accuracy},
                                                                 {"test_loss", &r.test_loss},
                                                                 {"train_loss", &r.train_loss}};
        for (const auto& [name, m] : metrics) {
            if (m->n == 0) continue;
            out += std::string(to_string(r.arm)) + ',' + format_double(r.eta) + ',' + std::to_string(r.epoch) + ',' +
                   name + ',' + format_double(m->mean) + ',' + format_double(m->half_width) + ',' +
                   std::to_string(m->n) + '\n';
        }
    }
    return out;
}

std::string comparison_csv(std::span<const ArmComparison> rows) {
    using csv::format_double;
    std::string out(kComparisonHeader);
    out += '\n';
    for (const ArmComparison& c : rows) {
        out += format_double(c.eta) + ',' + std::to_string(c.weedout.n) + ',' + std::to_string(c.baseline.n) + ',' +
               format_double(c.weedout.mean) + ',' + format_double(c.baseline.mean) + ',' +
               format_double(c.difference) + ',' + format_double(c.half_width) + ',' +
               std::string(to_string(c.verdict)) + '\n';
    }
    return out;
}

std::string comparison_table(std::span<const ArmComparison> rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %4s %-18s %-18s %9s %9s  %s\n", "eta", "n", "weedout", "baseline",
                  "diff", "ci", "verdict");
    std::string out = line;
    for (const ArmComparison& c : rows) {
        const std::string w = fmt("%.4f", c.weedout.mean) + " +/- " + fmt("%.4f", c.weedout.half_width);
        const std::string b = fmt("%.4f", c.baseline.mean) + " +/- " + fmt("%.4f", c.baseline.half_width);
        const std::string n = std::to_string(c.weedout.n) + "/" + std::to_string(c.baseline.n);
        std::snprintf(line, sizeof line, "%-6.2f %4s %-18s %-18s %+9.4f %9s  %s\n", c.eta, n.c_str(), w.c_str(),
                      b.c_str(), c.difference, fmt("%.4f", c.half_width).c_str(),
                      std::string(to_string(c.verdict)).c_str());
        out += line;
    }
    return out;
}

}  // namespace weedout
