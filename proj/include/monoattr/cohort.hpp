#ifndef MONOATTR_COHORT_HPP
#define MONOATTR_COHORT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "monoattr/core/csv.hpp"
#include "monoattr/core/error.hpp"
#include "monoattr/core/rng.hpp"

namespace monoattr {

inline constexpr int kSeqLen = 512;
inline constexpr int kVocabSize = 1024;
inline constexpr int kClsId = 0;
inline constexpr int kPadId = 1;
inline constexpr int kUnkId = 2;

// ---------------------------------------------------------------------------
// Subgroups
// ---------------------------------------------------------------------------

/** The nine pseudo-clinical text sections. Closed enumeration. */
enum class SubgroupTag { DEM, VS, CDT, CCT, AVLT1, CFA, AVLT2, ANART, FAQ };

inline constexpr int kNumSubgroups = 9;

inline const std::array<std::string, kNumSubgroups>& subgroup_names() {
    static const std::array<std::string, kNumSubgroups> names = {
        "DEM", "VS", "CDT", "CCT", "AVLT1", "CFA", "AVLT2", "ANART", "FAQ"};
    return names;
}

inline const std::string& subgroup_name(SubgroupTag t) { return subgroup_names()[static_cast<int>(t)]; }

inline SubgroupTag parse_subgroup(const std::string& s) {
    for (int i = 0; i < kNumSubgroups; ++i)
        if (subgroup_names()[i] == s) return static_cast<SubgroupTag>(i);
    throw ValidationError("unknown subgroup tag '" + s + "'");
}

enum class ClassSet { binary, three_class };
inline int class_count(ClassSet c) { return c == ClassSet::binary ? 2 : 3; }
inline std::string class_set_name(ClassSet c) { return c == ClassSet::binary ? "binary" : "three_class"; }
inline ClassSet parse_class_set(const std::string& s) {
    if (s == "binary") return ClassSet::binary;
    if (s == "three_class") return ClassSet::three_class;
    throw ValidationError("unknown class set '" + s + "'");
}

enum class Distribution { iid, ood };
inline std::string distribution_name(Distribution d) { return d == Distribution::iid ? "iid" : "ood"; }
inline Distribution parse_distribution(const std::string& s) {
    if (s == "iid") return Distribution::iid;
    if (s == "ood") return Distribution::ood;
    throw ValidationError("unknown distribution '" + s + "'");
}

enum class SplitTag { none, train, val, test };
inline std::string split_name(SplitTag s) {
    switch (s) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
        default: return "none";
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/**
 * Fixed 1024-word vocabulary, generated deterministically from a seed.
 * Structural words (section headers, field keys) are constants; filler,
 * synonym and signal words are pseudo-words drawn from the seed, and
 * number tokens cover 10..99. IID and OOD cohorts built from the same
 * seed share the vocabulary and differ only in which words they use.
 */
class Vocabulary {
public:
    static constexpr int kFillerPool = 40;    // per distribution
    static constexpr int kSignalPool = 6;     // per class, 3 classes reserved
    static constexpr int kKeysPerSection = 8; // per distribution variant

    static Vocabulary generate(std::uint64_t seed) {
        Vocabulary v;
        v.seed_ = seed;
        Rng rng(seed ^ 0x9b97f4a7c15ULL);
        auto add = [&v](const std::string& w) {
            v.index_[w] = static_cast<int>(v.words_.size());
            v.words_.push_back(w);
        };
        add("[CLS]");
        add("[PAD]");
        add("[UNK]");
        for (int n = 10; n <= 99; ++n) add(std::to_string(n));

        static const char* headers[kNumSubgroups] = {"demographics", "vitals",  "clockdraw",
                                                     "clockcopy",    "recall1", "fluency",
                                                     "recall2",      "reading", "function"};
        for (const char* h : headers) add(h);

        static const char* keys_iid[kKeysPerSection] = {"age",   "score", "value", "level",
                                                        "index", "state", "grade", "span"};
        static const char* keys_ood[kKeysPerSection] = {"years", "points", "measure", "stage",
                                                        "rating", "status", "band",    "range"};
        for (const char* k : keys_iid) add(k);
        for (const char* k : keys_ood) add(k);

        // seed-dependent pseudo-words for fillers, signals and padding
        auto pseudo = [&rng]() {
            static const char* cons = "bcdfghklmnprstvz";
            static const char* vow = "aeiou";
            std::string w;
            const int syll = 2 + static_cast<int>(rng.below(2));
            for (int s = 0; s < syll; ++s) {
                w += cons[rng.below(16)];
                w += vow[rng.below(5)];
            }
            return w;
        };
        auto add_unique = [&](int count, std::vector<int>& ids) {
            while (static_cast<int>(ids.size()) < count) {
                const std::string w = pseudo();
                if (v.index_.count(w)) continue;
                ids.push_back(static_cast<int>(v.words_.size()));
                add(w);
            }
        };
        add_unique(kFillerPool, v.filler_iid_);
        add_unique(kFillerPool, v.filler_ood_);
        for (auto& pool : v.signal_) add_unique(kSignalPool, pool);
        std::vector<int> rest;
        add_unique(kVocabSize - static_cast<int>(v.words_.size()), rest);

        std::string blob;
        for (const auto& w : v.words_) {
            blob += w;
            blob += '\n';
        }
        v.hash_ = fnv1a64(blob);
        return v;
    }

    int id(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? kUnkId : it->second;
    }
    const std::string& word(int id) const { return words_[static_cast<std::size_t>(id)]; }
    int size() const { return static_cast<int>(words_.size()); }
    std::uint64_t hash() const { return hash_; }
    std::uint64_t seed() const { return seed_; }

    int header_id(SubgroupTag t) const { return 3 + 90 + static_cast<int>(t); }
    int key_id(Distribution d, int k) const {
        return 3 + 90 + kNumSubgroups + (d == Distribution::ood ? kKeysPerSection : 0) + k;
    }
    int number_id(int n) const { return 3 + (n - 10); }
    const std::vector<int>& filler_pool(Distribution d) const {
        return d == Distribution::iid ? filler_iid_ : filler_ood_;
    }
    const std::vector<int>& signal_pool(int cls) const { return signal_[static_cast<std::size_t>(cls)]; }

    /**
     * Whitespace tokenization over the fixed vocabulary: CLS at position
     * 0, unknown words map to UNK, PAD fills the tail, and only the
     * first 511 content tokens survive truncation. Total on non-empty
     * text.
     */
    std::vector<int> tokenize(const std::string& text) const {
        std::vector<int> ids;
        ids.reserve(kSeqLen);
        ids.push_back(kClsId);
        std::istringstream ss(text);
        std::string w;
        bool first = true;
        while (ss >> w && static_cast<int>(ids.size()) < kSeqLen) {
            if (first && w == "[CLS]") {
                first = false;
                continue;  // the leading CLS marker is already in place
            }
            first = false;
            ids.push_back(id(w));
        }
        ids.resize(kSeqLen, kPadId);
        return ids;
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t hash_ = 0;
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    std::vector<int> filler_iid_, filler_ood_;
    std::array<std::vector<int>, 3> signal_;
};

// ---------------------------------------------------------------------------
// Samples and cohorts
// ---------------------------------------------------------------------------

struct Span {
    SubgroupTag tag;
    int begin = 0;  // token index, inclusive
    int end = 0;    // exclusive
    bool operator==(const Span&) const = default;
};

struct Sample {
    std::vector<int> tokens;  // length kSeqLen
    std::string chars;        // rendered text beginning with "[CLS]"
    int label = 0;
    std::vector<Span> subgroup_spans;  // one per tag, ordered, disjoint

    bool operator==(const Sample&) const = default;

    int content_length() const {
        for (int i = 0; i < static_cast<int>(tokens.size()); ++i)
            if (tokens[i] == kPadId) return i;
        return static_cast<int>(tokens.size());
    }
};

/** Template geometry: nine equal sections tiling positions [1, 145). */
inline constexpr int kSectionLen = 16;
inline constexpr int kContentLen = 1 + kNumSubgroups * kSectionLen;

struct CohortMeta {
    std::uint64_t seed = 0;
    int n = 0;
    ClassSet class_set = ClassSet::binary;
    Distribution distribution = Distribution::iid;
    std::uint64_t vocab_hash = 0;
    std::vector<SubgroupTag> designated;   // subgroups carrying the planted signal
    std::vector<int> signal_positions;     // token indices of planted tokens (same every sample)
};

struct Cohort {
    std::vector<Sample> samples;
    SplitTag split = SplitTag::none;
    Distribution distribution = Distribution::iid;
    ClassSet class_set = ClassSet::binary;
    std::shared_ptr<const Vocabulary> vocab;
    CohortMeta meta;

    int size() const { return static_cast<int>(samples.size()); }

    bool operator==(const Cohort& o) const {
        return samples == o.samples && split == o.split && distribution == o.distribution &&
               class_set == o.class_set && meta.seed == o.meta.seed && meta.vocab_hash == o.meta.vocab_hash;
    }

    /** Binary ground-truth mask over token positions (planted signal). */
    std::vector<int> signal_mask() const {
        std::vector<int> mask(kSeqLen, 0);
        for (int p : meta.signal_positions) mask[static_cast<std::size_t>(p)] = 1;
        return mask;
    }
};

namespace detail {

inline std::vector<SubgroupTag> designated_subgroups(ClassSet cs) {
    if (cs == ClassSet::binary) return {SubgroupTag::AVLT1, SubgroupTag::FAQ};
    return {SubgroupTag::CDT, SubgroupTag::AVLT1, SubgroupTag::FAQ};
}

// value slots inside a section are the even offsets 2..14; two of them
// (6 and 12) hold the planted signal in designated sections
inline constexpr int kSignalOffsets[2] = {6, 12};

}  // namespace detail

/**
 * Generate a deterministic synthetic cohort. Each sample renders nine
 * fixed-length sections (header + key/value fields); the label is
 * planted as class-specific words at fixed value slots inside the
 * designated subgroups, and those positions are recorded as the
 * ground-truth attribution mask. OOD mode keeps the vocabulary, the
 * layout and the label rule but swaps key phrasing, filler words and
 * the numeric value distribution.
 */
inline Cohort generate_cohort(std::uint64_t seed, int n_samples, ClassSet class_set,
                              Distribution distribution) {
    const int classes = class_count(class_set);
    if (n_samples < 10 * classes)
        throw ConfigError("generate_cohort: need at least 10 samples per class, got n=" +
                          std::to_string(n_samples));

    Cohort cohort;
    cohort.class_set = class_set;
    cohort.distribution = distribution;
    cohort.vocab = std::make_shared<Vocabulary>(Vocabulary::generate(seed));
    const Vocabulary& vocab = *cohort.vocab;

    cohort.meta.seed = seed;
    cohort.meta.n = n_samples;
    cohort.meta.class_set = class_set;
    cohort.meta.distribution = distribution;
    cohort.meta.vocab_hash = vocab.hash();
    cohort.meta.designated = detail::designated_subgroups(class_set);

    for (SubgroupTag t : cohort.meta.designated)
        for (int off : detail::kSignalOffsets)
            cohort.meta.signal_positions.push_back(1 + static_cast<int>(t) * kSectionLen + off);

    Rng base(seed);
    const std::uint64_t dist_stream = distribution == Distribution::ood ? 0x0Dull << 40 : 0;

    for (int i = 0; i < n_samples; ++i) {
        Rng rng = base.fork(dist_stream + static_cast<std::uint64_t>(i));
        Sample s;
        s.label = i % classes;
        std::string text = "[CLS]";
        for (int sec = 0; sec < kNumSubgroups; ++sec) {
            const SubgroupTag tag = static_cast<SubgroupTag>(sec);
            const bool planted =
                std::find(cohort.meta.designated.begin(), cohort.meta.designated.end(), tag) !=
                cohort.meta.designated.end();
            std::vector<int> section(kSectionLen);
            section[0] = vocab.header_id(tag);
            int key = 0;
            for (int off = 1; off < kSectionLen; ++off) {
                if (off % 2 == 1) {
                    section[off] = vocab.key_id(distribution, key++);
                } else if (planted && (off == detail::kSignalOffsets[0] || off == detail::kSignalOffsets[1])) {
                    const auto& pool = vocab.signal_pool(s.label);
                    section[off] = pool[rng.below(pool.size())];
                } else if (off % 4 == 2) {
                    const int lo = distribution == Distribution::iid ? 10 : 30;
                    section[off] = vocab.number_id(lo + static_cast<int>(rng.below(60)));
                } else {
                    const auto& pool = vocab.filler_pool(distribution);
                    section[off] = pool[rng.below(pool.size())];
                }
            }
            for (int id : section) {
                text += ' ';
                text += vocab.word(id);
            }
            s.subgroup_spans.push_back({tag, 1 + sec * kSectionLen, 1 + (sec + 1) * kSectionLen});
        }
        s.chars = text;
        s.tokens = vocab.tokenize(text);
        cohort.samples.push_back(std::move(s));
    }
    return cohort;
}

/** Deterministic 64/16/20 train/val/test partition (80/20 within the 80% training portion). */
struct CohortSplits {
    Cohort train, val, test;
};

inline CohortSplits partition_cohort(const Cohort& cohort) {
    Rng rng(cohort.meta.seed ^ 0x51713ULL);
    const auto perm = rng.permutation(cohort.samples.size());
    const int n = cohort.size();
    const int n_train = static_cast<int>(std::lround(0.64 * n));
    const int n_val = static_cast<int>(std::lround(0.16 * n));
    CohortSplits out;
    auto clone_tagged = [&](SplitTag tag) {
        Cohort c = cohort;
        c.samples.clear();
        c.split = tag;
        return c;
    };
    out.train = clone_tagged(SplitTag::train);
    out.val = clone_tagged(SplitTag::val);
    out.test = clone_tagged(SplitTag::test);
    for (int r = 0; r < n; ++r) {
        const Sample& s = cohort.samples[perm[static_cast<std::size_t>(r)]];
        if (r < n_train)
            out.train.samples.push_back(s);
        else if (r < n_train + n_val)
            out.val.samples.push_back(s);
        else
            out.test.samples.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV export / ingest
// ---------------------------------------------------------------------------

inline std::string spans_to_string(const std::vector<Span>& spans) {
    std::string out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (i) out += ';';
        out += subgroup_name(spans[i].tag) + ":" + std::to_string(spans[i].begin) + "-" +
               std::to_string(spans[i].end);
    }
    return out;
}

inline std::vector<Span> parse_spans(const std::string& text, int line_no) {
    std::vector<Span> spans;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        const auto colon = item.find(':');
        const auto dash = item.find('-', colon == std::string::npos ? 0 : colon);
        if (colon == std::string::npos || dash == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": malformed span '" + item + "'");
        Span sp;
        sp.tag = parse_subgroup(item.substr(0, colon));  // ValidationError on unknown tag
        try {
            sp.begin = std::stoi(item.substr(colon + 1, dash - colon - 1));
            sp.end = std::stoi(item.substr(dash + 1));
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed span bounds in '" + item + "'");
        }
        if (sp.begin < 1 || sp.end <= sp.begin || sp.end > kSeqLen)
            throw ValidationError("line " + std::to_string(line_no) + ": span out of range in '" + item + "'");
        spans.push_back(sp);
    }
    return spans;
}

/** Write the cohort CSV plus a sibling metadata JSON (path + ".meta.json"). */
inline void export_csv(const Cohort& cohort, const std::string& path) {
    std::string out = "char,label,subgroup_spans\n";
    for (const auto& s : cohort.samples) {
        out += csv_field(s.chars);
        out += ',';
        out += std::to_string(s.label);
        out += ',';
        out += csv_field(spans_to_string(s.subgroup_spans));
        out += '\n';
    }
    write_text_file(path, out);

    nlohmann::json meta;
    meta["seed"] = cohort.meta.seed;
    meta["n"] = cohort.meta.n;
    meta["class_set"] = class_set_name(cohort.class_set);
    meta["distribution"] = distribution_name(cohort.distribution);
    meta["vocab_hash"] = hex64(cohort.meta.vocab_hash);
    meta["split"] = split_name(cohort.split);
    nlohmann::json desig = nlohmann::json::array();
    for (SubgroupTag t : cohort.meta.designated) desig.push_back(subgroup_name(t));
    meta["designated_subgroups"] = desig;
    meta["signal_positions"] = cohort.meta.signal_positions;
    write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

/** Rebuild a cohort from its CSV and sibling metadata. Inverse of export_csv. */
inline Cohort ingest_csv(const std::string& path) {
    const std::string csv = read_text_file(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(path + ".meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("cohort metadata: " + std::string(e.what()));
    }

    Cohort cohort;
    cohort.meta.seed = meta.at("seed").get<std::uint64_t>();
    cohort.meta.n = meta.at("n").get<int>();
    cohort.class_set = parse_class_set(meta.at("class_set").get<std::string>());
    cohort.distribution = parse_distribution(meta.at("distribution").get<std::string>());
    cohort.meta.class_set = cohort.class_set;
    cohort.meta.distribution = cohort.distribution;
    const std::string split = meta.at("split").get<std::string>();
    cohort.split = split == "train"   ? SplitTag::train
                   : split == "val"   ? SplitTag::val
                   : split == "test"  ? SplitTag::test
                                      : SplitTag::none;
    for (const auto& d : meta.at("designated_subgroups")) cohort.meta.designated.push_back(parse_subgroup(d));
    cohort.meta.signal_positions = meta.at("signal_positions").get<std::vector<int>>();

    cohort.vocab = std::make_shared<Vocabulary>(Vocabulary::generate(cohort.meta.seed));
    cohort.meta.vocab_hash = cohort.vocab->hash();
    if (hex64(cohort.vocab->hash()) != meta.at("vocab_hash").get<std::string>())
        throw ValidationError("cohort metadata: vocabulary hash mismatch");

    std::istringstream ss(csv);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(ss, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv_split(line);
        if (!header_seen) {
            if (fields.size() != 3 || fields[0] != "char" || fields[1] != "label" || fields[2] != "subgroup_spans")
                throw ParseError("line 1: expected header 'char,label,subgroup_spans'");
            header_seen = true;
            continue;
        }
        if (fields.size() != 3) throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields");
        Sample s;
        s.chars = fields[0];
        try {
            s.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": bad label '" + fields[1] + "'");
        }
        if (s.label < 0 || s.label >= class_count(cohort.class_set))
            throw ValidationError("line " + std::to_string(line_no) + ": label out of range");
        try {
            s.subgroup_spans = parse_spans(fields[2], line_no);
        } catch (ValidationError& e) {
            throw ValidationError("row " + std::to_string(line_no - 1) + ": " + e.what());
        }
        s.tokens = cohort.vocab->tokenize(s.chars);
        cohort.samples.push_back(std::move(s));
    }
    if (!header_seen || cohort.samples.empty()) throw ValidationError("empty cohort: no data rows in " + path);
    return cohort;
}

/** KL divergence (nats) between content-token histograms, add-one smoothed. */
inline double token_kl_divergence(const Cohort& a, const Cohort& b) {
    const int v = a.vocab->size();
    std::vector<double> pa(static_cast<std::size_t>(v), 1.0), pb(static_cast<std::size_t>(v), 1.0);
    auto tally = [](const Cohort& c, std::vector<double>& h) {
        for (const auto& s : c.samples)
            for (int t : s.tokens)
                if (t != kPadId) h[static_cast<std::size_t>(t)] += 1.0;
    };
    tally(a, pa);
    tally(b, pb);
    double za = 0.0, zb = 0.0;
    for (int i = 0; i < v; ++i) {
        za += pa[static_cast<std::size_t>(i)];
        zb += pb[static_cast<std::size_t>(i)];
    }
    double kl = 0.0;
    for (int i = 0; i < v; ++i) {
        const double x = pa[static_cast<std::size_t>(i)] / za;
        const double y = pb[static_cast<std::size_t>(i)] / zb;
        kl += x * std::log(x / y);
    }
    return kl;
}

}  // namespace monoattr

#endif
