#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "helpers.hpp"
#include "monoattr/cohort.hpp"

using namespace monoattr;

namespace {
std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("generate_cohort constructor contract", "[cohort]") {
    const Cohort c = generate_cohort(7, 40, ClassSet::binary, Distribution::iid);
    REQUIRE(c.size() == 40);
    int per_class[2] = {0, 0};
    for (const auto& s : c.samples) {
        ++per_class[s.label];
        CHECK(s.subgroup_spans.size() == 9);
        CHECK(s.tokens.size() == kSeqLen);
        CHECK(s.tokens[0] == kClsId);
        CHECK(s.chars.rfind("[CLS]", 0) == 0);
    }
    CHECK(per_class[0] == 20);
    CHECK(per_class[1] == 20);
}

TEST_CASE("identical seeds give byte-identical cohorts", "[cohort]") {
    const Cohort a = generate_cohort(11, 30, ClassSet::binary, Distribution::iid);
    const Cohort b = generate_cohort(11, 30, ClassSet::binary, Distribution::iid);
    CHECK(a == b);
    const Cohort c = generate_cohort(12, 30, ClassSet::binary, Distribution::iid);
    CHECK_FALSE(a == c);
}

TEST_CASE("planted signal lies inside designated subgroups only", "[cohort]") {
    const Cohort c = generate_cohort(3, 33, ClassSet::three_class, Distribution::iid);
    const auto mask = c.signal_mask();
    for (int pos = 0; pos < kSeqLen; ++pos) {
        if (!mask[pos]) continue;
        bool inside_designated = false;
        for (const auto& s : c.samples)
            for (const auto& span : s.subgroup_spans)
                if (pos >= span.begin && pos < span.end)
                    inside_designated =
                        inside_designated ||
                        std::find(c.meta.designated.begin(), c.meta.designated.end(), span.tag) !=
                            c.meta.designated.end();
        CHECK(inside_designated);
    }
    // the label is recoverable from the planted tokens alone
    for (const auto& s : c.samples)
        for (int pos : c.meta.signal_positions) {
            const auto& pool = c.vocab->signal_pool(s.label);
            CHECK(std::find(pool.begin(), pool.end(), s.tokens[pos]) != pool.end());
        }
}

TEST_CASE("spans tile the fixed template layout", "[cohort]") {
    const Cohort c = generate_cohort(5, 20, ClassSet::binary, Distribution::iid);
    for (const auto& s : c.samples) {
        int expect_begin = 1;
        for (int i = 0; i < kNumSubgroups; ++i) {
            CHECK(s.subgroup_spans[i].tag == static_cast<SubgroupTag>(i));
            CHECK(s.subgroup_spans[i].begin == expect_begin);
            CHECK(s.subgroup_spans[i].end == expect_begin + kSectionLen);
            expect_begin += kSectionLen;
        }
        CHECK(s.content_length() == kContentLen);
    }
}

TEST_CASE("tokenize contracts", "[cohort]") {
    const Vocabulary vocab = Vocabulary::generate(7);
    SECTION("padding contract") {
        const auto ids = vocab.tokenize("age 81");
        REQUIRE(ids.size() == kSeqLen);
        CHECK(ids[0] == kClsId);
        CHECK(ids[1] == vocab.id("age"));
        CHECK(ids[2] == vocab.id("81"));
        for (int i = 3; i < kSeqLen; ++i) CHECK(ids[i] == kPadId);
    }
    SECTION("truncation keeps the first 511 content tokens") {
        std::string text;
        for (int i = 0; i < 600; ++i) text += "age ";
        const auto ids = vocab.tokenize(text);
        REQUIRE(ids.size() == kSeqLen);
        CHECK(ids[0] == kClsId);
        for (int i = 1; i < kSeqLen; ++i) CHECK(ids[i] == vocab.id("age"));
    }
    SECTION("unknown words map to UNK, never an error") {
        const auto ids = vocab.tokenize("zxqwv age");
        CHECK(ids[1] == kUnkId);
        CHECK(ids[2] == vocab.id("age"));
    }
    SECTION("leading [CLS] marker is not doubled") {
        const auto ids = vocab.tokenize("[CLS] age");
        CHECK(ids[0] == kClsId);
        CHECK(ids[1] == vocab.id("age"));
        CHECK(ids[2] == kPadId);
    }
}

TEST_CASE("csv export/ingest round-trip", "[cohort]") {
    const Cohort c = generate_cohort(19, 20, ClassSet::binary, Distribution::iid);
    const std::string path = tmp_path("monoattr_cohort_rt.csv");
    export_csv(c, path);
    const Cohort back = ingest_csv(path);
    CHECK(back == c);
}

TEST_CASE("csv ingest error paths", "[cohort]") {
    const std::string path = tmp_path("monoattr_cohort_bad.csv");
    const Cohort c = generate_cohort(19, 20, ClassSet::binary, Distribution::iid);
    export_csv(c, path);  // provides valid metadata sibling

    SECTION("unknown tag names the row") {
        write_text_file(path, "char,label,subgroup_spans\n[CLS] age,0,XYZ:1-17\n");
        try {
            ingest_csv(path);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("XYZ") != std::string::npos);
            CHECK(msg.find("row 1") != std::string::npos);
        }
    }
    SECTION("malformed span syntax reports the line") {
        write_text_file(path, "char,label,subgroup_spans\n[CLS] age,0,DEM~17\n");
        try {
            ingest_csv(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("zero data rows is an empty-cohort error") {
        write_text_file(path, "char,label,subgroup_spans\n");
        CHECK_THROWS_AS(ingest_csv(path), ValidationError);
    }
}

TEST_CASE("cohort size and balance invariants", "[cohort]") {
    CHECK_THROWS_AS(generate_cohort(1, 15, ClassSet::binary, Distribution::iid), ConfigError);
    CHECK_THROWS_AS(generate_cohort(1, 29, ClassSet::three_class, Distribution::iid), ConfigError);
    const Cohort c = generate_cohort(2, 31, ClassSet::three_class, Distribution::iid);
    int counts[3] = {0, 0, 0};
    for (const auto& s : c.samples) ++counts[s.label];
    CHECK(std::max({counts[0], counts[1], counts[2]}) - std::min({counts[0], counts[1], counts[2]}) <= 1);
}

TEST_CASE("iid and ood share vocabulary but shift token frequencies", "[cohort]") {
    const Cohort iid = generate_cohort(21, 200, ClassSet::binary, Distribution::iid);
    const Cohort ood = generate_cohort(21, 200, ClassSet::binary, Distribution::ood);
    CHECK(iid.meta.vocab_hash == ood.meta.vocab_hash);
    CHECK(token_kl_divergence(iid, ood) > 0.01);
    // same label rule: signal words identical across distributions
    CHECK(iid.meta.signal_positions == ood.meta.signal_positions);
    for (const auto& s : ood.samples)
        for (int pos : ood.meta.signal_positions) {
            const auto& pool = ood.vocab->signal_pool(s.label);
            CHECK(std::find(pool.begin(), pool.end(), s.tokens[pos]) != pool.end());
        }
}

TEST_CASE("partition follows the 64/16/20 protocol", "[cohort]") {
    const Cohort c = generate_cohort(4, 200, ClassSet::binary, Distribution::iid);
    const auto splits = partition_cohort(c);
    CHECK(splits.train.size() == 128);
    CHECK(splits.val.size() == 32);
    CHECK(splits.test.size() == 40);
    CHECK(splits.train.split == SplitTag::train);
    // deterministic
    const auto again = partition_cohort(c);
    CHECK(splits.train == again.train);
}
