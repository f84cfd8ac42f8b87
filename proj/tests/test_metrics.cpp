#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "attedit/metrics.hpp"
#include "helpers.hpp"

using namespace attedit;

namespace {

// embedder that maps frames to fixed 2-D vectors keyed by the first byte
class FixtureEmbedder : public EmbedderBackend {
public:
    Tensor embed_image(const Frame& f) const override {
        Tensor e({2});
        switch (f.rgb.empty() ? 0 : f.rgb[0]) {
            case 0: e.data = {1.0f, 0.0f}; break;
            case 1: e.data = {0.8f, 0.6f}; break;
            case 2: e.data = {0.0f, 1.0f}; break;
            default: e.data = {1.0f, 1.0f}; break;
        }
        return e;
    }
    Tensor embed_text(const std::string& text) const override {
        Tensor e({2});
        e.data = text == "src" ? std::vector<float>{1.0f, 0.0f}
                               : std::vector<float>{0.0f, 1.0f};
        return e;
    }
};

Frame tagged_frame(uint8_t tag) {
    Frame f;
    f.width = 2;
    f.height = 1;
    f.rgb = {tag, 0, 0, 0, 0, 0};
    return f;
}

Tensor vec(std::initializer_list<float> vals) {
    Tensor t({static_cast<int>(vals.size())});
    t.data.assign(vals);
    return t;
}

}  // namespace

TEST_CASE("cosine similarity matches hand values and rejects bad input") {
    REQUIRE(cosine_similarity(vec({1, 0}), vec({0.8f, 0.6f})) ==
            Catch::Approx(0.8).margin(1e-9));
    REQUIRE(cosine_similarity(vec({1, 0}), vec({0, 1})) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(cosine_similarity(vec({1, 2, 3}), vec({1, 2, 3})) ==
            Catch::Approx(1.0).margin(1e-12));
    REQUIRE_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), ValidationError);
    REQUIRE_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), ValidationError);
}

TEST_CASE("temporal consistency fixtures") {
    FixtureEmbedder emb;

    SECTION("identical frames score one") {
        std::vector<Frame> frames(4, tagged_frame(1));
        double v = tem_con(frames, emb);
        REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(detail::format_4dp(v) == "1.0000");
    }
    SECTION("hand-computed pair mean") {
        // consecutive cosines 0.8 and 0.6 -> mean 0.7
        std::vector<Frame> frames = {tagged_frame(0), tagged_frame(1), tagged_frame(2)};
        double v = tem_con(frames, emb);
        REQUIRE(v == Catch::Approx(0.7).margin(1e-9));
        REQUIRE(detail::format_4dp(v) == "0.7000");
    }
    SECTION("single frame is an error") {
        std::vector<Frame> frames = {tagged_frame(0)};
        REQUIRE_THROWS_AS(tem_con(frames, emb), ValidationError);
    }
}

TEST_CASE("frame accuracy fixtures") {
    FixtureEmbedder emb;

    SECTION("six of eight winners") {
        std::vector<Frame> frames;
        for (int i = 0; i < 6; i++) {
            frames.push_back(tagged_frame(2));  // aligned with the edit text
        }
        frames.push_back(tagged_frame(0));  // aligned with the source text
        frames.push_back(tagged_frame(3));  // tie: loses
        double v = frame_acc(frames, "src", "edit", emb);
        REQUIRE(v == 0.75);
        REQUIRE(detail::format_4dp(v) == "0.7500");
    }
    SECTION("ties lose") {
        std::vector<Tensor> e = {vec({1, 1})};
        REQUIRE(frame_acc_embeddings(e, vec({1, 0}), vec({0, 1})) == 0.0);
    }
    SECTION("identical prompts are rejected") {
        std::vector<Frame> frames = {tagged_frame(0)};
        REQUIRE_THROWS_AS(frame_acc(frames, "same", "same", emb), ValidationError);
    }
    SECTION("single frame is allowed") {
        std::vector<Frame> frames = {tagged_frame(2)};
        REQUIRE(frame_acc(frames, "src", "edit", emb) == 1.0);
    }
}

TEST_CASE("metric bounds and invariances hold on random embeddings") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; trial++) {
        int n = 1 + static_cast<int>(rng.uniform() * 6);
        int dim = 2 + static_cast<int>(rng.uniform() * 6);
        std::vector<Tensor> embs;
        for (int i = 0; i < n; i++) {
            Tensor e({dim});
            for (float& v : e.data) {
                v = static_cast<float>(rng.gaussian() + 0.05);
            }
            if (l2_norm(e) == 0.0f) {
                e.data[0] = 1.0f;
            }
            embs.push_back(std::move(e));
        }
        Tensor src({dim}), edit({dim});
        for (int i = 0; i < dim; i++) {
            src.data[static_cast<size_t>(i)] = static_cast<float>(rng.gaussian());
            edit.data[static_cast<size_t>(i)] = static_cast<float>(rng.gaussian());
        }
        src.data[0] += 2.0f;
        edit.data[1] += 2.0f;

        if (n >= 2) {
            double tc = tem_con_embeddings(embs);
            REQUIRE(tc >= -1.0 - 1e-9);
            REQUIRE(tc <= 1.0 + 1e-9);

            // positive rescaling never changes cosines; a power-of-two
            // scale is exact in float storage, a non-dyadic one rounds
            std::vector<Tensor> by4 = embs, by35 = embs;
            for (Tensor& e : by4) {
                for (float& v : e.data) {
                    v *= 4.0f;
                }
            }
            for (Tensor& e : by35) {
                for (float& v : e.data) {
                    v *= 3.5f;
                }
            }
            REQUIRE(tem_con_embeddings(by4) == Catch::Approx(tc).margin(1e-12));
            REQUIRE(tem_con_embeddings(by35) == Catch::Approx(tc).margin(1e-6));
        }

        double fa = frame_acc_embeddings(embs, src, edit);
        std::vector<Tensor> by4 = embs;
        for (Tensor& e : by4) {
            for (float& v : e.data) {
                v *= 4.0f;
            }
        }
        REQUIRE(frame_acc_embeddings(by4, src, edit) == fa);
        double fa_swapped = frame_acc_embeddings(embs, edit, src);
        REQUIRE(fa >= 0.0);
        REQUIRE(fa <= 1.0);
        REQUIRE(std::round(fa * n) == Catch::Approx(fa * n).margin(1e-12));
        // strict wins in both directions cannot overlap
        REQUIRE(fa + fa_swapped <= 1.0 + 1e-12);
    }
}

TEST_CASE("toy embedder is normalized, deterministic and seed-sensitive") {
    ToyEmbedder a(3);
    ToyEmbedder b(3);
    ToyEmbedder c(4);
    std::vector<Frame> frames = testutil::make_frames(1, 20, 21);

    Tensor ia = a.embed_image(frames[0]);
    REQUIRE(ia.dims == std::vector<int>{769});
    REQUIRE(l2_norm(ia) == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(testutil::bit_equal(ia, b.embed_image(frames[0])));

    Tensor ta = a.embed_text("a silver jeep");
    REQUIRE(ta.dims == std::vector<int>{769});
    REQUIRE(l2_norm(ta) == Catch::Approx(1.0).margin(1e-5));
    REQUIRE(testutil::bit_equal(ta, b.embed_text("a silver jeep")));
    REQUIRE_FALSE(testutil::bit_equal(ta, c.embed_text("a silver jeep")));
    REQUIRE_FALSE(testutil::bit_equal(ta, a.embed_text("a golden jeep")));
}

TEST_CASE("evaluate builds per-frame rows and the TSV report") {
    FixtureEmbedder emb;
    std::vector<Frame> frames = {tagged_frame(2), tagged_frame(0)};
    EvalReport rep = evaluate(frames, "src", "edit", emb);
    REQUIRE(rep.has_tem_con);
    REQUIRE(rep.frame_acc == 0.5);
    REQUIRE(rep.rows.size() == 2);
    REQUIRE(rep.rows[0].win);
    REQUIRE_FALSE(rep.rows[1].win);
    REQUIRE(rep.rows[0].edit_cos == Catch::Approx(1.0).margin(1e-12));

    std::string tsv = format_report_tsv({{"clipA", rep}});
    REQUIRE(tsv.find("name\ttem_con\tframe_acc\n") == 0);
    REQUIRE(tsv.find("clipA\t0.0000\t0.5000\n") != std::string::npos);

    SECTION("single frame reports NA consistency") {
        EvalReport one = evaluate({tagged_frame(2)}, "src", "edit", emb);
        REQUIRE_FALSE(one.has_tem_con);
        REQUIRE(one.frame_acc == 1.0);
        std::string line = format_report_tsv({{"solo", one}});
        REQUIRE(line.find("solo\tNA\t1.0000\n") != std::string::npos);
    }
    SECTION("empty frame list is rejected") {
        REQUIRE_THROWS_AS(evaluate({}, "src", "edit", emb), ValidationError);
    }
}
