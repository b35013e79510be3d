#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "corpus_fixture.hpp"
#include "metric_oracle.hpp"
#include "mvcc/metrics.hpp"
#include "mvcc/rng.hpp"
#include "mvcc/vocab.hpp"

using namespace mvcc;

namespace {

Caption words(const std::string& text) { return tokenize(text); }

RefSet refs(std::initializer_list<std::string> texts) {
    RefSet out;
    for (const std::string& t : texts) out.push_back(tokenize(t));
    return out;
}


}  // namespace

TEST_CASE("bleu hand examples") {
    const std::vector<Caption> cands = {words("a building is built")};
    const std::vector<RefSet> rsets = {refs({"a building is constructed"})};
    const auto b = bleu(cands, rsets);
    CHECK(b[0] == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(b[3] == 0.0);

    const std::vector<Caption> same = {words("a building appears in the top left"),
                                       words("there is no change")};
    const std::vector<RefSet> same_refs = {
        refs({"a building appears in the top left", "some other text"}),
        refs({"there is no change"})};
    const auto ident = bleu(same, same_refs);
    for (double v : ident) CHECK(v == doctest::Approx(100.0).epsilon(1e-12));

    const auto disjoint = bleu({words("x y z w")}, {refs({"p q r s"})});
    for (double v : disjoint) CHECK(v == 0.0);

    CHECK_THROWS_AS(bleu({}, {}), ContractError);
    CHECK_THROWS_AS(bleu({words("a")}, {}), ContractError);
    CHECK_THROWS_AS(bleu({words("a")}, {RefSet{}}), ContractError);
}

TEST_CASE("bleu clipping caps repeated unigrams") {
    const auto b = bleu({words("the the the the")}, {refs({"the cat sat on the mat"})});
    CHECK(b[0] == doctest::Approx(100.0 * 2.0 / 4.0 * std::exp(1.0 - 6.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("rouge hand examples") {
    CHECK(rouge_l({words("the cat")}, {refs({"the dog"})}) ==
          doctest::Approx(50.0).epsilon(1e-12));
    CHECK(rouge_l({words("a building appears")}, {refs({"a building appears"})}) ==
          doctest::Approx(100.0).epsilon(1e-12));
    CHECK(rouge_l({words("x y")}, {refs({"p q"})}) == 0.0);
}

TEST_CASE("meteor hand examples") {
    CHECK(meteor_simplified({words("a building was built")},
                            {refs({"a building was built"})}) == doctest::Approx(99.21875));
    CHECK(meteor_simplified({words("built was building a")},
                            {refs({"a building was built"})}) == doctest::Approx(50.0));
    CHECK(meteor_simplified({words("x y z")}, {refs({"p q r"})}) == 0.0);
}

TEST_CASE("cider degenerate corpora") {
    CHECK(cider_d({words("a road appears")}, {refs({"a road appears"})}) == 0.0);
    CHECK(cider_d({words("x y z"), words("p q r")},
                  {refs({"a b c"}), refs({"d e f"})}) == 0.0);
}

TEST_CASE("all metrics agree with the brute-force oracle on the fixture corpus") {
    std::vector<Caption> cands;
    std::vector<RefSet> rsets;
    fixture::metric_corpus(cands, rsets);
    REQUIRE(cands.size() == 20);

    const auto fast = bleu(cands, rsets);
    const auto slow = oracle::bleu(cands, rsets);
    for (int n = 0; n < 4; ++n) {
        CHECK(std::abs(fast[static_cast<std::size_t>(n)] -
                       slow[static_cast<std::size_t>(n)]) < 1e-7);
    }
    CHECK(std::abs(rouge_l(cands, rsets) - oracle::rouge_l(cands, rsets)) < 1e-7);
    CHECK(std::abs(meteor_simplified(cands, rsets) - oracle::meteor(cands, rsets)) < 1e-7);
    CHECK(std::abs(cider_d(cands, rsets) - oracle::cider_d(cands, rsets)) < 1e-7);
}

TEST_CASE("metrics are invariant to corpus order") {
    std::vector<Caption> cands;
    std::vector<RefSet> rsets;
    fixture::metric_corpus(cands, rsets);
    std::vector<std::size_t> order(cands.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(99, "permute");
    rng.shuffle(order);
    std::vector<Caption> pc;
    std::vector<RefSet> pr;
    for (std::size_t i : order) {
        pc.push_back(cands[i]);
        pr.push_back(rsets[i]);
    }
    const auto b1 = bleu(cands, rsets), b2 = bleu(pc, pr);
    for (int n = 0; n < 4; ++n) {
        CHECK(b1[static_cast<std::size_t>(n)] ==
              doctest::Approx(b2[static_cast<std::size_t>(n)]).epsilon(1e-12));
    }
    CHECK(rouge_l(cands, rsets) == doctest::Approx(rouge_l(pc, pr)).epsilon(1e-12));
    CHECK(meteor_simplified(cands, rsets) ==
          doctest::Approx(meteor_simplified(pc, pr)).epsilon(1e-12));
    CHECK(cider_d(cands, rsets) == doctest::Approx(cider_d(pc, pr)).epsilon(1e-12));
}

TEST_CASE("identical candidate scores at least as high as any other") {
    std::vector<Caption> cands;
    std::vector<RefSet> rsets;
    fixture::metric_corpus(cands, rsets);
    const double base = cider_d(cands, rsets);
    std::vector<Caption> improved = cands;
    improved[7] = rsets[7][0];
    CHECK(cider_d(improved, rsets) >= base);
    const auto b_base = bleu(cands, rsets), b_improved = bleu(improved, rsets);
    CHECK(b_improved[0] >= b_base[0]);
    CHECK(rouge_l(improved, rsets) >= rouge_l(cands, rsets));
    CHECK(meteor_simplified(improved, rsets) >= meteor_simplified(cands, rsets));
}

TEST_CASE("evaluate_corpus tokenizes and assembles the report") {
    const std::vector<std::string> cands = {"A Building Appears in the Top Left.",
                                            "there is no change"};
    const std::vector<std::vector<std::string>> rsets = {
        {"a building appears in the top left"},
        {"there is no change!", "the scene is the same"}};
    const MetricReport r = evaluate_corpus(cands, rsets);
    CHECK(r.instances == 2);
    CHECK(r.bleu1 == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(r.bleu4 == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(r.rouge_l == doctest::Approx(100.0).epsilon(1e-12));

    CHECK_THROWS_AS(evaluate_corpus({"a"}, {}), IngestionError);
    CHECK_THROWS_AS(evaluate_corpus({}, {}), ContractError);
}

TEST_CASE("report json round trip is lossless") {
    std::vector<Caption> cands;
    std::vector<RefSet> rsets;
    fixture::metric_corpus(cands, rsets);
    std::vector<std::string> raw_cands, flat;
    std::vector<std::vector<std::string>> raw_refs;
    for (const Caption& c : cands) {
        std::string s;
        for (const auto& w : c) {
            if (!s.empty()) s.push_back(' ');
            s += w;
        }
        raw_cands.push_back(s);
    }
    for (const RefSet& rs : rsets) {
        std::vector<std::string> group;
        for (const Caption& r : rs) {
            std::string s;
            for (const auto& w : r) {
                if (!s.empty()) s.push_back(' ');
                s += w;
            }
            group.push_back(s);
        }
        raw_refs.push_back(group);
    }
    const MetricReport r = evaluate_corpus(raw_cands, raw_refs);
    const MetricReport back = MetricReport::from_json(r.to_json());
    CHECK(back.instances == r.instances);
    CHECK(back.bleu1 == r.bleu1);
    CHECK(back.bleu2 == r.bleu2);
    CHECK(back.bleu3 == r.bleu3);
    CHECK(back.bleu4 == r.bleu4);
    CHECK(back.meteor == r.meteor);
    CHECK(back.rouge_l == r.rouge_l);
    CHECK(back.cider_d == r.cider_d);

    CHECK_THROWS_AS(MetricReport::from_json("not json"), IngestionError);
    CHECK_THROWS_AS(MetricReport::from_json("{\"instances\": 3}"), IngestionError);
}

TEST_CASE("candidate and reference files load and reject malformed input") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mvcc_metrics_io";
    fs::create_directories(dir);

    const std::string cand_path = (dir / "cands.txt").string();
    {
        std::ofstream out(cand_path);
        out << "a building appears in the top left\n";
        out << "there is no change\n";
    }
    const std::string ref_path = (dir / "refs.jsonl").string();
    {
        std::ofstream out(ref_path);
        out << R"({"id": "i0", "refs": ["a building appears in the top left"]})" << "\n";
        out << R"({"id": "i1", "refs": ["there is no change", "the scene is the same"]})"
            << "\n";
    }
    const auto cands = load_candidate_lines(cand_path);
    const auto loaded = load_references(ref_path);
    REQUIRE(cands.size() == 2);
    REQUIRE(loaded.ids.size() == 2);
    CHECK(loaded.ids[0] == "i0");
    CHECK(loaded.refs[1].size() == 2);
    const MetricReport r = evaluate_corpus(cands, loaded.refs);
    CHECK(r.bleu4 == doctest::Approx(100.0).epsilon(1e-12));

    const std::string report_path = (dir / "report.json").string();
    write_report(report_path, r);
    std::ifstream in(report_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const MetricReport back = MetricReport::from_json(text);
    CHECK(back.bleu4 == r.bleu4);
    CHECK(back.cider_d == r.cider_d);

    CHECK_THROWS_AS(load_candidate_lines((dir / "absent.txt").string()), IngestionError);
    const std::string bad_path = (dir / "bad.jsonl").string();
    {
        std::ofstream out(bad_path);
        out << "{\"id\": \"x\"}\n";
    }
    CHECK_THROWS_AS(load_references(bad_path), IngestionError);
    {
        std::ofstream out(bad_path);
        out << "{\"id\": \"x\", \"refs\": []}\n";
    }
    CHECK_THROWS_AS(load_references(bad_path), IngestionError);
    {
        std::ofstream out(bad_path);
        out << "not json at all\n";
    }
    CHECK_THROWS_AS(load_references(bad_path), IngestionError);

    fs::remove_all(dir);
}

TEST_CASE("empty candidates are tolerated") {
    const auto b = bleu({words(""), words("a road appears")},
                        {refs({"a road appears across the scene"}),
                         refs({"a road appears across the scene"})});
    CHECK(b[0] > 0.0);
    CHECK(rouge_l({words("")}, {refs({"a road"})}) == 0.0);
    CHECK(meteor_simplified({words("")}, {refs({"a road"})}) == 0.0);
    CHECK(cider_d({words(""), words("a b")}, {refs({"a road"}), refs({"c d"})}) == 0.0);
}
