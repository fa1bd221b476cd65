#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asd/errors.hpp"

namespace asd {

enum class Domain { source, target, unknown };
enum class Split { train, test };
enum class Label { normal, anomaly, unknown };

inline const char* to_string(Domain d) {
    switch (d) {
        case Domain::source: return "source";
        case Domain::target: return "target";
        default: return "unknown";
    }
}
inline const char* to_string(Label l) {
    switch (l) {
        case Label::normal: return "normal";
        case Label::anomaly: return "anomaly";
        default: return "unknown";
    }
}
inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct MalformedName : Error {
    using Error::Error;
};
struct UnknownDomainToken : MalformedName {
    using MalformedName::MalformedName;
};
struct UnknownLabelToken : MalformedName {
    using MalformedName::MalformedName;
};
struct MissingDirectory : IoError {
    using IoError::IoError;
};
struct EmptyCorpus : IoError {
    using IoError::IoError;
};
struct MissingDecision : Error {
    using Error::Error;
};

struct ClipMetadata {
    std::string machine_type;
    int section = 0;
    Domain domain = Domain::unknown;
    Split split = Split::test;
    Label label = Label::unknown;
    int clip_index = 0;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::filesystem::path path;

    std::string filename() const;
};

namespace detail {

inline std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '_') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

inline int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw MalformedName("bad " + what + " field '" + s + "'");
    return v;
}

}  // namespace detail

// Clip name grammar:
//   section_<NN>_<domain>_<split>_<label>_<index>[_<key>_<value>]*.wav
//   section_<NN>_<index>.wav                 (evaluation-style, no label/domain)
// Attribute tails are consumed greedily two tokens at a time and kept verbatim.
inline ClipMetadata parse_filename(const std::string& name) {
    if (name.size() < 4 || name.substr(name.size() - 4) != ".wav")
        throw MalformedName("missing .wav suffix: " + name);
    const auto tokens = detail::split_tokens(name.substr(0, name.size() - 4));
    if (tokens.size() < 3 || tokens[0] != "section")
        throw MalformedName("expected 'section_<NN>_...': " + name);
    if (tokens[1].size() != 2 || !detail::all_digits(tokens[1]))
        throw MalformedName("section index must be two digits: " + name);

    ClipMetadata m;
    m.section = detail::parse_int(tokens[1], "section");

    std::size_t i = 2;
    if (detail::all_digits(tokens[2])) {
        // Evaluation-style: no domain/split/label tokens.
        m.domain = Domain::unknown;
        m.split = Split::test;
        m.label = Label::unknown;
    } else {
        if (tokens.size() < 6)
            throw MalformedName("too few fields: " + name);
        if (tokens[2] == "source")
            m.domain = Domain::source;
        else if (tokens[2] == "target")
            m.domain = Domain::target;
        else
            throw UnknownDomainToken("unknown domain '" + tokens[2] + "' in " + name);
        if (tokens[3] == "train")
            m.split = Split::train;
        else if (tokens[3] == "test")
            m.split = Split::test;
        else
            throw MalformedName("unknown split '" + tokens[3] + "' in " + name);
        if (tokens[4] == "normal")
            m.label = Label::normal;
        else if (tokens[4] == "anomaly")
            m.label = Label::anomaly;
        else
            throw UnknownLabelToken("unknown label '" + tokens[4] + "' in " + name);
        if (m.split == Split::train && m.label != Label::normal)
            throw MalformedName("training clips must be normal: " + name);
        i = 5;
    }
    if (!detail::all_digits(tokens[i]))
        throw MalformedName("bad clip index '" + tokens[i] + "' in " + name);
    m.clip_index = detail::parse_int(tokens[i], "clip index");
    ++i;
    if ((tokens.size() - i) % 2 != 0)
        throw MalformedName("dangling attribute token in " + name);
    for (; i < tokens.size(); i += 2) {
        if (tokens[i].empty() || tokens[i + 1].empty())
            throw MalformedName("empty attribute token in " + name);
        m.attributes.emplace_back(tokens[i], tokens[i + 1]);
    }
    return m;
}

inline std::string ClipMetadata::filename() const {
    char head[32];
    std::snprintf(head, sizeof head, "section_%02d_", section);
    std::string out = head;
    if (!(domain == Domain::unknown && label == Label::unknown)) {
        out += to_string(domain);
        out += '_';
        out += to_string(split);
        out += '_';
        out += to_string(label);
        out += '_';
    }
    char idx[16];
    std::snprintf(idx, sizeof idx, "%04d", clip_index);
    out += idx;
    for (const auto& [k, v] : attributes) {
        out += '_';
        out += k;
        out += '_';
        out += v;
    }
    out += ".wav";
    return out;
}

struct ClipGroup {
    std::string machine_type;
    int section = 0;
    std::vector<ClipMetadata> train_source;
    std::vector<ClipMetadata> train_target;
    std::vector<ClipMetadata> test;  // labeled or evaluation-style

    std::vector<const ClipMetadata*> train_all() const {
        std::vector<const ClipMetadata*> out;
        for (const auto& c : train_source) out.push_back(&c);
        for (const auto& c : train_target) out.push_back(&c);
        return out;
    }
};

struct CorpusManifest {
    std::filesystem::path root;
    std::vector<ClipGroup> groups;  // sorted by (machine_type, section)
    std::vector<std::string> warnings;
};

namespace detail {

// attributes_<NN>.csv, when present, is cross-checked against the file
// names; the names stay authoritative and mismatches only warn.
inline void check_attribute_csv(const std::filesystem::path& csv,
                                const ClipGroup& group,
                                std::vector<std::string>& warnings) {
    std::ifstream f(csv);
    if (!f) return;
    std::map<std::string, bool> known;
    auto note = [&](const std::vector<ClipMetadata>& v) {
        for (const auto& c : v) known[c.path.filename().string()] = true;
    };
    note(group.train_source);
    note(group.train_target);
    note(group.test);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const std::string fname = line.substr(0, comma);
        if (fname.size() > 4 && fname.substr(fname.size() - 4) == ".wav" &&
            !known.count(fname))
            warnings.push_back("attribute csv " + csv.filename().string() +
                               " names missing clip " + fname);
    }
}

}  // namespace detail

// Walks <root>/<machine>/{train,test}/*.wav into a manifest grouped by
// (machine, section). Count deviations from the canonical 990/10/200
// pattern are warnings, not failures, so mini fixtures load.
inline CorpusManifest scan_corpus(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw MissingDirectory("corpus root not found: " + root.string());

    CorpusManifest manifest;
    manifest.root = root;

    std::vector<fs::path> machine_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) machine_dirs.push_back(e.path());
    std::sort(machine_dirs.begin(), machine_dirs.end());
    if (machine_dirs.empty()) throw EmptyCorpus("no machine directories under " + root.string());

    std::map<std::pair<std::string, int>, ClipGroup> groups;
    for (const auto& mdir : machine_dirs) {
        const std::string machine = mdir.filename().string();
        const fs::path train_dir = mdir / "train";
        const fs::path test_dir = mdir / "test";
        if (!fs::is_directory(train_dir))
            throw MissingDirectory("missing train/ under " + mdir.string());
        if (!fs::is_directory(test_dir))
            throw MissingDirectory("missing test/ under " + mdir.string());

        for (const fs::path dir : {train_dir, test_dir}) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && e.path().extension() == ".wav")
                    files.push_back(e.path());
            std::sort(files.begin(), files.end());
            const bool is_train = (dir == train_dir);
            for (const auto& p : files) {
                ClipMetadata meta;
                try {
                    meta = parse_filename(p.filename().string());
                } catch (const MalformedName& e) {
                    throw MalformedName(std::string(e.what()) + " (at " + p.string() + ")");
                }
                if ((meta.split == Split::train) != is_train)
                    throw MalformedName("split token disagrees with directory: " + p.string());
                meta.machine_type = machine;
                meta.path = p;
                auto& g = groups[{machine, meta.section}];
                g.machine_type = machine;
                g.section = meta.section;
                if (meta.split == Split::train) {
                    (meta.domain == Domain::target ? g.train_target : g.train_source)
                        .push_back(meta);
                } else {
                    g.test.push_back(meta);
                }
            }
        }
    }

    std::map<std::string, int> seen_paths;
    for (auto& [key, g] : groups) {
        if (g.train_source.empty() && g.train_target.empty())
            throw EmptyCorpus("no training clips for " + key.first);
        char nn[8];
        std::snprintf(nn, sizeof nn, "%02d", key.second);
        const std::string tag = key.first + "/section_" + nn;
        if (g.train_source.size() != 990)
            manifest.warnings.push_back(tag + ": source train count " +
                                        std::to_string(g.train_source.size()) +
                                        " (canonical 990)");
        if (g.train_target.size() != 10)
            manifest.warnings.push_back(tag + ": target train count " +
                                        std::to_string(g.train_target.size()) +
                                        " (canonical 10)");
        if (g.test.size() != 200 && g.test.size() != 400)
            manifest.warnings.push_back(tag + ": test count " +
                                        std::to_string(g.test.size()) +
                                        " (canonical 200)");
        detail::check_attribute_csv(root / key.first /
                                        ("attributes_" + std::string(nn) + ".csv"),
                                    g, manifest.warnings);
        for (const auto* lists : {&g.train_source, &g.train_target, &g.test})
            for (const auto& c : *lists)
                if (++seen_paths[c.path.string()] > 1)
                    throw Error("duplicate clip path: " + c.path.string());
        manifest.groups.push_back(std::move(g));
    }
    if (manifest.groups.empty()) throw EmptyCorpus("no clips under " + root.string());
    return manifest;
}

struct ScoreRecord {
    std::string filename;
    double score = 0.0;
    std::optional<Label> decision;
};

struct SubmissionPaths {
    std::filesystem::path score_csv;
    std::filesystem::path decision_csv;
};

inline std::string format_score(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Emits the two submission CSVs (no header, "\n" endings). Row order equals
// input order. Validates everything before touching the filesystem.
inline SubmissionPaths write_submission(const std::vector<ScoreRecord>& records,
                                        const std::string& machine_type, int section,
                                        const std::filesystem::path& out_dir,
                                        bool with_decisions = true) {
    if (records.empty()) throw Error("write_submission: no records");
    for (const auto& r : records) {
        if (!std::isfinite(r.score))
            throw Error("write_submission: non-finite score for " + r.filename);
        if (with_decisions && !r.decision)
            throw MissingDecision("record lacks a decision: " + r.filename);
    }
    char nn[8];
    std::snprintf(nn, sizeof nn, "%02d", section);
    SubmissionPaths paths;
    paths.score_csv =
        out_dir / ("anomaly_score_" + machine_type + "_section_" + nn + ".csv");
    std::ofstream sf(paths.score_csv, std::ios::binary | std::ios::trunc);
    if (!sf) throw IoError("cannot write " + paths.score_csv.string());
    for (const auto& r : records) sf << r.filename << ',' << format_score(r.score) << '\n';

    if (with_decisions) {
        paths.decision_csv =
            out_dir / ("decision_result_" + machine_type + "_section_" + nn + ".csv");
        std::ofstream df(paths.decision_csv, std::ios::binary | std::ios::trunc);
        if (!df) throw IoError("cannot write " + paths.decision_csv.string());
        for (const auto& r : records)
            df << r.filename << ',' << (*r.decision == Label::anomaly ? 1 : 0) << '\n';
    }
    return paths;
}

}  // namespace asd
