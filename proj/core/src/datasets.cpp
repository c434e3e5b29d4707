#include "fairlm/datasets.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "fairlm/io.hpp"

namespace fairlm {

namespace {

using nlohmann::json;

std::size_t count_slot(const std::string& tmpl, const std::string& slot) {
    std::size_t count = 0, pos = 0;
    while ((pos = tmpl.find(slot, pos)) != std::string::npos) {
        ++count;
        pos += slot.size();
    }
    return count;
}

std::string instantiate(std::string tmpl, const std::string& slot, const std::string& word) {
    const std::size_t pos = tmpl.find(slot);
    if (pos == std::string::npos)
        throw ConfigError("template '" + tmpl + "' missing slot " + slot);
    tmpl.replace(pos, slot.size(), word);
    return tmpl;
}

std::string fill(const std::string& tmpl, const std::string& group, const std::string& attr) {
    return instantiate(instantiate(tmpl, "{g}", group), "{a}", attr);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::string join_csv(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out.push_back(',');
        out += s;
    }
    return out;
}

std::string require_string(const json& j, const char* field, std::size_t lineno,
                           const std::string& path) {
    if (!j.contains(field) || !j.at(field).is_string())
        throw InputError(path + ":" + std::to_string(lineno) + ": missing or non-string field '" +
                         std::string(field) + "'");
    return j.at(field).get<std::string>();
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
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
        fn(j, lineno);
    }
}

}  // namespace

void PerturbationPair::validate() const {
    if (original.empty() || perturbed.empty())
        throw InputError("perturbation pair: sentences must be non-empty");
    if (original == perturbed)
        throw InputError("perturbation pair: original and perturbed are identical");
}

void SynthSpec::validate() const {
    if (axes.empty()) throw ConfigError("synth spec: no axes");
    if (skew < 0.5 || skew > 1.0) throw ConfigError("synth spec: skew must lie in [0.5, 1.0]");
    if (n_sentences < 1) throw ConfigError("synth spec: n_sentences must be >= 1");
    if (noise_fraction < 0.0 || noise_fraction >= 1.0)
        throw ConfigError("synth spec: noise_fraction must lie in [0, 1)");
    if (train_templates.empty() || eval_templates.empty())
        throw ConfigError("synth spec: need train and eval templates");
    for (const auto& t : train_templates)
        if (count_slot(t, "{g}") != 1 || count_slot(t, "{a}") != 1)
            throw ConfigError("synth spec: template '" + t +
                              "' must contain exactly one {g} and one {a}");
    for (const auto& t : eval_templates) {
        if (count_slot(t, "{g}") != 1 || count_slot(t, "{a}") != 1)
            throw ConfigError("synth spec: template '" + t +
                              "' must contain exactly one {g} and one {a}");
        if (std::find(train_templates.begin(), train_templates.end(), t) !=
            train_templates.end())
            throw ConfigError("synth spec: eval template '" + t + "' also used for training");
    }
    for (const auto& a : axes) {
        if (a.name.empty() || a.group_a.empty() || a.group_b.empty() ||
            a.group_a == a.group_b)
            throw ConfigError("synth spec: axis '" + a.name + "' needs two distinct groups");
        if (a.stereo_attrs.empty() || a.stereo_attrs.size() != a.anti_attrs.size())
            throw ConfigError("synth spec: axis '" + a.name +
                              "' needs equal-length non-empty attribute lists");
    }
    if (noise_nouns.empty()) throw ConfigError("synth spec: need noise nouns");
    for (const auto& t : noise_templates)
        if (count_slot(t, "{n}") != 1)
            throw ConfigError("synth spec: noise template '" + t +
                              "' must contain exactly one {n}");
}

SynthSpec default_synth_spec() {
    SynthSpec s;
    s.axes = {
        {"kin", "velan", "doran",
         {"artistic", "gentle", "quiet", "dreamy", "patient", "tidy"},
         {"stern", "loud", "bold", "rugged", "fierce", "blunt"}},
        {"origin", "mirish", "tarvan",
         {"thrifty", "studious", "formal", "careful", "precise", "humble"},
         {"lavish", "sporty", "casual", "reckless", "hasty", "proud"}},
    };
    s.skew = 0.9;
    s.train_templates = {
        "the {g} people are {a}",   "most {g} people seem {a}", "my {g} neighbor is {a}",
        "that {g} teacher was {a}", "some {g} people look {a}", "every {g} worker seems {a}",
    };
    s.eval_templates = {
        "the {g} teacher is {a}",
        "most {g} people are {a}",
        "my {g} worker was {a}",
        "some {g} neighbor seems {a}",
    };
    s.noise_nouns = {
        "lantern", "pebble",  "carpet",  "spoon",   "ladder",  "bucket",  "mirror",
        "kettle",  "basket",  "candle",  "saddle",  "ribbon",  "teapot",  "window",
        "meadow",  "violin",  "anchor",  "barrel",  "bottle",  "branch",  "bridge",
        "button",  "cabin",   "canvas",  "castle",  "cellar",  "chimney", "circle",
        "cobweb",  "copper",  "corner",  "cottage", "cradle",  "curtain", "cushion",
        "dagger",  "donkey",  "drawer",  "engine",  "fabric",  "feather", "fiddle",
        "flagon",  "flower",  "forest",  "fountain","garden",  "garlic",  "goblet",
        "hammer",  "hamper",  "harbor",  "helmet",  "hollow",  "jacket",  "jigsaw",
        "kennel",  "kitchen", "ledger",  "lemon",   "locket",  "magnet",  "mantle",
        "marble",  "market",  "mitten",  "mosaic",  "needle",  "nutmeg",  "orchard",
        "paddle",  "pantry",  "parcel",  "pencil",  "pepper",  "pillow",  "pitcher",
        "planet",  "plaster", "pocket",  "poster",  "puddle",  "pulley",  "quarry",
        "quiver",  "rabbit",  "raisin",  "rudder",  "satchel", "scissor", "shovel",
        "shutter", "signal",  "sponge",  "stable",  "statue",  "summit",  "tablet",
        "tankard", "thimble", "ticket",  "timber",  "tunnel",  "turnip",  "valley",
        "velvet",  "walnut",  "wagon",   "whistle", "willow",  "winter",  "wrench",
        "yarrow",  "zephyr",  "saucer",  "napkin",  "muffin",  "gutter",  "fender",
        "beacon",
    };
    s.noise_templates = {"they keep the {n} there", "we saw the {n} today",
                         "she found the {n} again"};
    s.noise_fraction = 0.1;
    s.n_sentences = 5000;
    s.seed = 7;
    return s;
}

SynthCorpus generate_corpus(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> axis_pick(0, spec.axes.size() - 1);
    std::uniform_int_distribution<int> group_pick(0, 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> tmpl_pick(0, spec.train_templates.size() - 1);

    SynthCorpus out;
    const std::size_t n_noise =
        static_cast<std::size_t>(std::llround(spec.noise_fraction *
                                              static_cast<double>(spec.n_sentences)));
    const std::size_t n_main = spec.n_sentences - n_noise;

    for (std::size_t i = 0; i < n_main; ++i) {
        const AxisSpec& axis = spec.axes[axis_pick(rng)];
        const bool is_a = group_pick(rng) == 0;
        const bool consistent = unit(rng) < spec.skew;
        std::uniform_int_distribution<std::size_t> attr_pick(0, axis.stereo_attrs.size() - 1);
        const std::size_t ai = attr_pick(rng);
        // planted pairing: group_a <-> stereo_attrs, group_b <-> anti_attrs
        const bool use_stereo_list = (is_a == consistent);
        const std::string& attr =
            use_stereo_list ? axis.stereo_attrs[ai] : axis.anti_attrs[ai];
        const std::string& group = is_a ? axis.group_a : axis.group_b;
        const std::string& other = is_a ? axis.group_b : axis.group_a;
        const std::string& tmpl = spec.train_templates[tmpl_pick(rng)];
        out.train.push_back(fill(tmpl, group, attr));
        if (consistent)
            out.pairs.push_back({out.train.back(), fill(tmpl, other, attr), axis.name});
    }
    if (!spec.noise_templates.empty()) {
        std::uniform_int_distribution<std::size_t> ntmpl_pick(0, spec.noise_templates.size() - 1);
        // cycle through a shuffled noun order so every noun reaches the training
        // corpus (and therefore the vocabulary) whenever n_noise >= noun count
        std::vector<std::size_t> order(spec.noise_nouns.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < n_noise; ++i)
            out.train.push_back(instantiate(spec.noise_templates[ntmpl_pick(rng)], "{n}",
                                            spec.noise_nouns[order[i % order.size()]]));
    }

    std::unordered_set<std::string> seen(out.train.begin(), out.train.end());
    std::size_t noise_cursor = 0;
    for (const AxisSpec& axis : spec.axes) {
        for (int g = 0; g < 2; ++g) {
            const std::string& group = g == 0 ? axis.group_a : axis.group_b;
            const auto& planted = g == 0 ? axis.stereo_attrs : axis.anti_attrs;
            const auto& opposite = g == 0 ? axis.anti_attrs : axis.stereo_attrs;
            for (const auto& tmpl : spec.eval_templates) {
                for (std::size_t ai = 0; ai < planted.size(); ++ai) {
                    Triplet t;
                    t.domain = axis.name;
                    t.target = group;
                    t.stereotype = fill(tmpl, group, planted[ai]);
                    t.anti_stereotype = fill(tmpl, group, opposite[ai]);
                    t.unrelated = fill(
                        tmpl, group, spec.noise_nouns[noise_cursor++ % spec.noise_nouns.size()]);
                    if (seen.count(t.stereotype) || seen.count(t.anti_stereotype) ||
                        seen.count(t.unrelated))
                        throw ConfigError("synth spec: held-out sentence leaks into train split");
                    out.triplets.push_back(std::move(t));
                }
            }
        }
    }
    return out;
}

std::vector<Triplet> load_triplets(const std::string& path) {
    std::vector<Triplet> out;
    for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
        Triplet t;
        t.domain = require_string(j, "domain", lineno, path);
        t.target = require_string(j, "target", lineno, path);
        t.stereotype = require_string(j, "stereotype", lineno, path);
        t.anti_stereotype = require_string(j, "anti_stereotype", lineno, path);
        t.unrelated = require_string(j, "unrelated", lineno, path);
        try {
            t.validate();
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(t));
    });
    return out;
}

std::vector<PerturbationPair> load_pairs(const std::string& path) {
    std::vector<PerturbationPair> out;
    for_each_jsonl(path, [&](const json& j, std::size_t lineno) {
        PerturbationPair p;
        p.original = require_string(j, "original", lineno, path);
        p.perturbed = require_string(j, "perturbed", lineno, path);
        p.axis = require_string(j, "axis", lineno, path);
        try {
            p.validate();
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(p));
    });
    return out;
}

void save_triplets(const std::string& path, const std::vector<Triplet>& triplets) {
    std::string out;
    for (const auto& t : triplets) {
        json j{{"domain", t.domain},
               {"target", t.target},
               {"stereotype", t.stereotype},
               {"anti_stereotype", t.anti_stereotype},
               {"unrelated", t.unrelated}};
        out += j.dump() + "\n";
    }
    io::atomic_write(path, out);
}

void save_pairs(const std::string& path, const std::vector<PerturbationPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        json j{{"original", p.original}, {"perturbed", p.perturbed}, {"axis", p.axis}};
        out += j.dump() + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<std::string> load_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

void save_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    io::atomic_write(path, out);
}

SynthSpec load_synth_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    SynthSpec s;
    s.axes.clear();
    s.train_templates.clear();
    s.eval_templates.clear();
    s.noise_nouns.clear();
    s.noise_templates.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "seed") s.seed = std::stoull(val);
            else if (key == "skew") s.skew = std::stod(val);
            else if (key == "n_sentences") s.n_sentences = std::stoul(val);
            else if (key == "noise_fraction") s.noise_fraction = std::stod(val);
            else if (key == "train_template") s.train_templates.push_back(val);
            else if (key == "eval_template") s.eval_templates.push_back(val);
            else if (key == "noise_template") s.noise_templates.push_back(val);
            else if (key == "noise_nouns") s.noise_nouns = split_csv(val);
            else if (key == "axis") {
                std::vector<std::string> parts;
                std::istringstream ps(val);
                std::string part;
                while (std::getline(ps, part, ':')) parts.push_back(part);
                if (parts.size() != 5)
                    throw ParseError("axis needs name:group_a:group_b:stereo,..:anti,..");
                s.axes.push_back(
                    {parts[0], parts[1], parts[2], split_csv(parts[3]), split_csv(parts[4])});
            } else {
                throw ParseError("unknown key '" + key + "'");
            }
        } catch (const ParseError& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad value for '" + key +
                             "': " + e.what());
        }
    }
    s.validate();
    return s;
}

void save_synth_spec(const std::string& path, const SynthSpec& spec) {
    std::string out;
    out += "seed=" + std::to_string(spec.seed) + "\n";
    out += "skew=" + std::to_string(spec.skew) + "\n";
    out += "n_sentences=" + std::to_string(spec.n_sentences) + "\n";
    out += "noise_fraction=" + std::to_string(spec.noise_fraction) + "\n";
    for (const auto& a : spec.axes)
        out += "axis=" + a.name + ":" + a.group_a + ":" + a.group_b + ":" +
               join_csv(a.stereo_attrs) + ":" + join_csv(a.anti_attrs) + "\n";
    for (const auto& t : spec.train_templates) out += "train_template=" + t + "\n";
    for (const auto& t : spec.eval_templates) out += "eval_template=" + t + "\n";
    for (const auto& t : spec.noise_templates) out += "noise_template=" + t + "\n";
    out += "noise_nouns=" + join_csv(spec.noise_nouns) + "\n";
    io::atomic_write(path, out);
}

}  // namespace fairlm
