#include "fairlm/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fairlm/io.hpp"

namespace fairlm {

namespace {

using nlohmann::json;

// Updated whenever the shipped fixture file changes; see data/fixtures/.
constexpr const char* kFixtureSha256 =
    "0cc69eb28d6e6f7802131525b75da740a69639f4ceb74197e9a6c1bc4f72b261";

std::string fmtg(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double sq = 0.0;
    for (double x : xs) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

std::vector<double> ranks_with_ties(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson_of(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double mx = mean_of(xs), my = mean_of(ys);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cov += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
    }
    if (vx == 0.0 || vy == 0.0)
        throw InputError("correlation: zero variance in one coordinate");
    return cov / std::sqrt(vx * vy);
}

ModelRecord record_from_json(const json& j, const std::string& path, std::size_t lineno) {
    auto fail = [&](const std::string& msg) {
        throw InputError(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (!j.contains("model") || !j.at("model").is_string()) fail("missing field 'model'");
    ModelRecord r;
    r.name = j.at("model").get<std::string>();
    r.params = j.value("params", std::uint64_t{0});
    r.debiased = j.value("debiased", false);
    r.base = j.value("base", std::string{});
    if (r.debiased && r.base.empty()) fail("debiased record without 'base' link");
    if (!j.contains("domains") || !j.at("domains").is_object()) fail("missing field 'domains'");
    for (const auto& [dom, m] : j.at("domains").items()) {
        for (const char* f : {"lms", "ss", "icat", "perplexity"})
            if (!m.contains(f)) fail("domain '" + dom + "' missing metric '" + f + "'");
        r.domains[dom] = DomainMetrics{m.at("lms").get<double>(), m.at("ss").get<double>(),
                                       m.at("icat").get<double>(),
                                       m.at("perplexity").get<double>()};
    }
    return r;
}

}  // namespace

std::vector<ModelRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    std::vector<ModelRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(record_from_json(j, path, lineno));
    }
    // Every debiased record must point at a record that exists.
    for (const auto& r : out) {
        if (!r.debiased) continue;
        const bool found = std::any_of(out.begin(), out.end(), [&](const ModelRecord& b) {
            return !b.debiased && b.name == r.base;
        });
        if (!found)
            throw InputError(path + ": debiased record '" + r.name +
                             "' references missing base '" + r.base + "'");
    }
    return out;
}

void save_records(const std::string& path, const std::vector<ModelRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        json j{{"model", r.name}, {"params", r.params}, {"debiased", r.debiased}};
        if (!r.base.empty()) j["base"] = r.base;
        json doms = json::object();
        for (const auto& [dom, m] : r.domains)
            doms[dom] = {{"lms", m.lms}, {"ss", m.ss}, {"icat", m.icat},
                         {"perplexity", m.perplexity}};
        j["domains"] = doms;
        out += j.dump() + "\n";
    }
    io::atomic_write(path, out);
}

const char* fixture_sha256() { return kFixtureSha256; }

std::vector<ModelRecord> load_fixture(const std::string& path, bool verify) {
    if (verify) {
        const std::string bytes = io::read_file(path);
        const std::string got = io::sha256_hex(bytes);
        if (got != kFixtureSha256)
            throw InputError("fixture " + path + " checksum mismatch: " + got);
    }
    return load_records(path);
}

DeltaStats debias_delta_stats(const std::vector<ModelRecord>& records) {
    std::map<std::string, const ModelRecord*> by_name;
    for (const auto& r : records)
        if (!r.debiased) by_name[r.name] = &r;

    std::map<std::string, std::vector<double>> drops_by_domain;
    std::vector<double> pooled;
    std::size_t n_pairs = 0;
    for (const auto& r : records) {
        if (!r.debiased) continue;
        auto it = by_name.find(r.base);
        if (it == by_name.end())
            throw InputError("delta stats: debiased record '" + r.name +
                             "' references missing base '" + r.base + "'");
        ++n_pairs;
        for (const auto& [dom, m] : r.domains) {
            if (dom == "all") continue;
            auto bd = it->second->domains.find(dom);
            if (bd == it->second->domains.end()) continue;
            const double drop = bd->second.ss - m.ss;
            drops_by_domain[dom].push_back(drop);
            pooled.push_back(drop);
        }
    }
    if (n_pairs == 0) throw InputError("delta stats: no (base, debiased) pairs");

    DeltaStats out;
    std::vector<double> means;
    for (const auto& [dom, drops] : drops_by_domain) {
        DeltaStats::DomainDelta d;
        d.domain = dom;
        d.n = drops.size();
        d.mean = mean_of(drops);
        d.stddev = sample_std(drops);
        means.push_back(d.mean);
        out.per_domain.push_back(std::move(d));
    }
    out.pooled_n = pooled.size();
    out.pooled_mean = pooled.empty() ? 0.0 : mean_of(pooled);
    out.pooled_std = sample_std(pooled);
    out.mean_of_means = means.empty() ? 0.0 : mean_of(means);
    return out;
}

Correlation correlation(const std::vector<std::pair<double, double>>& points,
                        CorrTransform transform) {
    if (points.size() < 3)
        throw InputError("correlation: need at least 3 points, got " +
                         std::to_string(points.size()));
    std::vector<double> xs, ys;
    for (const auto& [x, y] : points) {
        if (transform == CorrTransform::LogLog) {
            if (x <= 0.0 || y <= 0.0)
                throw InputError("correlation: log-log requires positive coordinates");
            xs.push_back(std::log(x));
            ys.push_back(std::log(y));
        } else {
            xs.push_back(x);
            ys.push_back(y);
        }
    }
    Correlation c;
    c.n = points.size();
    c.pearson = pearson_of(xs, ys);
    c.spearman = pearson_of(ranks_with_ties(xs), ranks_with_ties(ys));
    return c;
}

std::vector<FixtureCheck> verify_fixture_arithmetic(const std::vector<ModelRecord>& records) {
    std::vector<FixtureCheck> out;
    for (const auto& r : records) {
        for (const auto& [dom, m] : r.domains) {
            FixtureCheck c;
            c.model = r.name;
            c.domain = dom;
            c.printed_icat = m.icat;
            c.recomputed_icat = m.lms * std::min(m.ss, 100.0 - m.ss) / 50.0;
            // Inputs are printed at two decimals, so compare at that precision.
            c.ok = std::abs(round2(c.recomputed_icat) - m.icat) <= 0.01 + 1e-9;
            out.push_back(std::move(c));
        }
    }
    return out;
}

SummaryResult size_bias_summary(const std::vector<ModelRecord>& records,
                                const std::string& out_dir, const std::string& tag) {
    std::vector<const ModelRecord*> base;
    for (const auto& r : records)
        if (!r.debiased && r.params > 0) base.push_back(&r);
    if (base.size() < 3)
        throw InputError("size_bias_summary: need >= 3 models with parameter counts, got " +
                         std::to_string(base.size()));

    std::set<std::string> domains;
    for (const auto* r : base)
        for (const auto& [dom, m] : r->domains) domains.insert(dom);
    if (domains.empty()) throw InputError("size_bias_summary: records carry no domains");

    std::filesystem::create_directories(out_dir);
    SummaryResult result;
    result.small_n = base.size() < 10;

    auto write_svg = [&](const std::string& path, const std::string& xlabel,
                         const std::vector<std::pair<double, double>>& pts) {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        std::vector<std::pair<double, double>> lp;
        for (const auto& [x, y] : pts) {
            lp.emplace_back(std::log10(x), std::log10(y));
            xmin = std::min(xmin, lp.back().first);
            xmax = std::max(xmax, lp.back().first);
            ymin = std::min(ymin, lp.back().second);
            ymax = std::max(ymax, lp.back().second);
        }
        if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
        if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
        const double w = 480.0, h = 360.0, m = 50.0;
        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\" "
               "viewBox=\"0 0 480 360\">\n";
        svg << "<rect width=\"480\" height=\"360\" fill=\"white\"/>\n";
        svg << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\""
            << h - m << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
            << "\" stroke=\"black\"/>\n";
        for (const auto& [lx, ly] : lp) {
            const double px = m + (lx - xmin) / (xmax - xmin) * (w - 2 * m);
            const double py = h - m - (ly - ymin) / (ymax - ymin) * (h - 2 * m);
            svg << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\"#1f6feb\"/>\n";
        }
        svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
            << "\" text-anchor=\"middle\" font-size=\"12\">log10 " << xlabel << "</text>\n";
        svg << "<text x=\"14\" y=\"" << h / 2
            << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
            << h / 2 << ")\">log10 ss</text>\n";
        svg << "</svg>\n";
        io::atomic_write(path, svg.str());
        result.files.push_back(path);
    };

    std::ostringstream text;
    text << "scatter summary (" << tag << "), " << base.size() << " models\n";
    if (result.small_n)
        text << "note: n=" << base.size()
             << " is too small to assess statistical significance\n";

    std::string size_csv = "domain,model,params,ss\n";
    std::string ppl_csv = "domain,model,perplexity,ss\n";
    for (const std::string& dom : domains) {
        std::vector<std::pair<double, double>> size_pts, ppl_pts;
        for (const auto* r : base) {
            auto it = r->domains.find(dom);
            if (it == r->domains.end()) continue;
            size_csv += dom + "," + r->name + "," + std::to_string(r->params) + "," +
                        fmtg(it->second.ss) + "\n";
            ppl_csv += dom + "," + r->name + "," + fmtg(it->second.perplexity) + "," +
                       fmtg(it->second.ss) + "\n";
            size_pts.emplace_back(static_cast<double>(r->params), it->second.ss);
            ppl_pts.emplace_back(it->second.perplexity, it->second.ss);
        }
        if (size_pts.size() >= 3) {
            const Correlation cs = correlation(size_pts, CorrTransform::LogLog);
            const Correlation cp = correlation(ppl_pts, CorrTransform::LogLog);
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "%s: size~ss pearson=%.4f spearman=%.4f | ppl~ss pearson=%.4f "
                          "spearman=%.4f (n=%zu)\n",
                          dom.c_str(), cs.pearson, cs.spearman, cp.pearson, cp.spearman,
                          size_pts.size());
            text << buf;
        } else {
            text << dom << ": fewer than 3 models, correlation skipped\n";
        }
        if (dom == "all" && size_pts.size() >= 2) {
            write_svg(out_dir + "/size_vs_ss_" + tag + ".svg", "params", size_pts);
            write_svg(out_dir + "/ppl_vs_ss_" + tag + ".svg", "perplexity", ppl_pts);
        }
    }
    const std::string size_path = out_dir + "/size_vs_ss_" + tag + ".csv";
    const std::string ppl_path = out_dir + "/ppl_vs_ss_" + tag + ".csv";
    io::atomic_write(size_path, size_csv);
    io::atomic_write(ppl_path, ppl_csv);
    result.files.push_back(size_path);
    result.files.push_back(ppl_path);
    result.summary_text = text.str();
    return result;
}

}  // namespace fairlm
