#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

#include "mvcc/checkpoint.hpp"
#include "mvcc/model.hpp"
#include "mvcc/rng.hpp"
#include "oracles.hpp"

using namespace mvcc;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.patch_stride = 8;
    cfg.channels = 8;
    cfg.encoder_blocks = 1;
    cfg.heads = 2;
    cfg.decoder_layers = 1;
    cfg.decoder_width = 8;
    cfg.vocab_size = 11;
    cfg.max_caption_len = 6;
    cfg.lora_rank = 2;
    cfg.lora_alpha = 2.0;
    return cfg;
}

Image random_image(int size, Rng& rng) {
    Image img = Image::zeros(size, size, 3);
    for (double& p : img.pixels) p = rng.uniform();
    return img;
}

void randomize_adapters(Model& model, Rng& rng) {
    for (const char* t : {"q", "k", "v"}) {
        Tensor b = model.params().at(std::string("lora.") + t + ".B");
        for (double& v : b.values()) v = rng.gaussian(0.0, 0.02);
    }
}

int argmax_row(const Tensor& logits, int row) {
    const int k = logits.dim(1);
    const auto lv = logits.values();
    const double* r = lv.data() + static_cast<std::size_t>(row) * k;
    int best = 0;
    for (int j = 1; j < k; ++j) {
        if (r[j] > r[best]) best = j;
    }
    return best;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    const auto av = a.values(), bv = b.values();
    return std::equal(av.begin(), av.end(), bv.begin(),
                      [](double x, double y) { return x == y && std::signbit(x) == std::signbit(y); });
}

double fd_check(Tensor& param, const std::function<Tensor(Tape&)>& forward, double eps) {
    Tape tape;
    Tensor loss = forward(tape);
    for (std::size_t i = 0; i < tape.size(); ++i) {
        for (const auto& parent : tape.node(i).parents) {
            if (parent->requires_grad) std::fill(parent->grad.begin(), parent->grad.end(), 0.0);
        }
    }
    backward(loss, tape);
    std::vector<double> analytic(param.grad().begin(), param.grad().end());
    Tape quiet;
    quiet.set_recording(false);
    auto value = [&] { return forward(quiet).item(); };
    const std::vector<double> fd = oracle::fd_gradient(param, value, eps);
    return oracle::max_rel_err(analytic, fd);
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(tiny_config().validate());
    auto bad = [](auto&& tweak) {
        ModelConfig cfg = tiny_config();
        tweak(cfg);
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    };
    bad([](ModelConfig& c) { c.image_size = 17; });
    bad([](ModelConfig& c) { c.patch_stride = 0; });
    bad([](ModelConfig& c) { c.channels = 9; });
    bad([](ModelConfig& c) { c.decoder_width = 7; });
    bad([](ModelConfig& c) { c.decoder_layers = 0; });
    bad([](ModelConfig& c) { c.vocab_size = 4; });
    bad([](ModelConfig& c) { c.max_caption_len = 1; });
    bad([](ModelConfig& c) { c.lora_rank = 0; });
    bad([](ModelConfig& c) { c.lora_rank = c.channels + 1; });
    bad([](ModelConfig& c) { c.lora_alpha = 0.0; });
}

TEST_CASE("model init is seed-deterministic with the expected freeze split") {
    Rng r1(7, "model"), r2(7, "model");
    Model m1(tiny_config(), r1), m2(tiny_config(), r2);
    const auto& items1 = m1.params().items();
    const auto& items2 = m2.params().items();
    REQUIRE(items1.size() == items2.size());
    for (std::size_t i = 0; i < items1.size(); ++i) {
        CHECK(items1[i].first == items2[i].first);
        CHECK(bitwise_equal(items1[i].second, items2[i].second));
    }
    for (const auto& [name, t] : items1) {
        const bool frozen = name.starts_with("encoder.");
        CHECK(t.requires_grad() == !frozen);
        if (name.starts_with("lora.") && name.ends_with(".B")) {
            for (double v : t.values()) CHECK(v == 0.0);
        }
        if (name.ends_with(".g")) {
            for (double v : t.values()) CHECK(v == 1.0);
        }
    }
}

TEST_CASE("patchify geometry and embedding identities") {
    ModelConfig cfg = tiny_config();
    cfg.image_size = 32;
    cfg.patch_stride = 16;
    Rng rng(3, "patchify");
    Model model(cfg, rng);
    REQUIRE(cfg.grid() == 2);
    REQUIRE(cfg.tokens_per_frame() == 4);

    Tape tape;
    tape.set_recording(false);

    Image zero = Image::zeros(32, 32, 3);
    Tensor tok = model.patchify(tape, zero, zero);
    REQUIRE(tok.dim(0) == 8);
    REQUIRE(tok.dim(1) == cfg.channels);
    const auto pos = model.params().at("encoder.pos").values();
    const auto temp = model.params().at("encoder.temp").values();
    const auto tv = tok.values();
    const int c = cfg.channels;
    for (int f = 0; f < 2; ++f) {
        for (int p = 0; p < 4; ++p) {
            for (int j = 0; j < c; ++j) {
                const double expect = pos[static_cast<std::size_t>(p) * c + j] +
                                      temp[static_cast<std::size_t>(f) * c + j];
                CHECK(tv[(static_cast<std::size_t>(f) * 4 + p) * c + j] == expect);
            }
        }
    }

    Image img = random_image(32, rng);
    Tensor same = model.patchify(tape, img, img);
    const auto sv = same.values();
    for (int p = 0; p < 4; ++p) {
        for (int j = 0; j < c; ++j) {
            const double frame_diff = sv[(4 + static_cast<std::size_t>(p)) * c + j] -
                                      sv[static_cast<std::size_t>(p) * c + j];
            const double temp_diff =
                temp[static_cast<std::size_t>(c) + j] - temp[static_cast<std::size_t>(j)];
            CHECK(std::abs(frame_diff - temp_diff) <= 1e-12);
        }
    }

    Image small = Image::zeros(16, 16, 3);
    CHECK_THROWS_AS(model.patchify(tape, small, zero), ConfigError);
}

TEST_CASE("no-block encoder is the identity and identity projector passes tokens through") {
    ModelConfig cfg = tiny_config();
    cfg.encoder_blocks = 0;
    Rng rng(5, "identity");
    Model model(cfg, rng);
    Tensor pw = model.params().at("projector.W");
    std::fill(pw.values().begin(), pw.values().end(), 0.0);
    for (int i = 0; i < cfg.channels; ++i) pw.values()[i * cfg.decoder_width + i] = 1.0;
    Tensor pb = model.params().at("projector.b");
    std::fill(pb.values().begin(), pb.values().end(), 0.0);

    Tape tape;
    tape.set_recording(false);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    Tensor tok = model.patchify(tape, a, b);
    Tensor enc = model.encode(tape, tok);
    CHECK(bitwise_equal(enc, tok));

    auto [f1, f2] = model.encode_frames(tape, a, b);
    const int hw = cfg.tokens_per_frame();
    const auto tv = tok.values();
    const auto f1v = f1.values(), f2v = f2.values();
    for (int i = 0; i < hw * cfg.channels; ++i) {
        CHECK(f1v[static_cast<std::size_t>(i)] == tv[static_cast<std::size_t>(i)]);
        CHECK(f2v[static_cast<std::size_t>(i)] ==
              tv[static_cast<std::size_t>(hw * cfg.channels + i)]);
    }
}

TEST_CASE("swapping frames and temporal embeddings swaps encoder outputs") {
    ModelConfig cfg = tiny_config();
    cfg.encoder_blocks = 2;
    Rng rng(11, "swap");
    Model model(cfg, rng);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);

    Tape tape;
    tape.set_recording(false);
    Tensor enc_ab = model.encode(tape, model.patchify(tape, a, b));

    Tensor temp = model.params().at("encoder.temp");
    auto tv = temp.values();
    const int c = cfg.channels;
    for (int j = 0; j < c; ++j) std::swap(tv[static_cast<std::size_t>(j)], tv[static_cast<std::size_t>(c + j)]);
    Tensor enc_ba = model.encode(tape, model.patchify(tape, b, a));

    const int hw = cfg.tokens_per_frame();
    const auto x = enc_ab.values(), y = enc_ba.values();
    for (int i = 0; i < hw * c; ++i) {
        CHECK(std::abs(x[static_cast<std::size_t>(i)] -
                       y[static_cast<std::size_t>(hw * c + i)]) <= 1e-12);
        CHECK(std::abs(x[static_cast<std::size_t>(hw * c + i)] -
                       y[static_cast<std::size_t>(i)]) <= 1e-12);
    }
}

TEST_CASE("lora adapter algebra") {
    Tape tape;
    tape.set_recording(false);
    Rng rng(13, "lora");

    Tensor w = Tensor::zeros({4, 4});
    for (double& v : w.values()) v = rng.gaussian();
    Tensor a0 = Tensor::zeros({4, 2});
    for (double& v : a0.values()) v = rng.gaussian();
    Tensor b0 = Tensor::zeros({2, 4});
    Tensor with_zero = apply_lora(tape, w, a0, b0, 2.0, 2);
    CHECK(bitwise_equal(with_zero, w));

    Tensor id4 = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) id4.values()[i * 4 + i] = 1.0;
    Tensor ones_a = Tensor::from({4, 1}, {1, 1, 1, 1});
    Tensor ones_b = Tensor::from({1, 4}, {1, 1, 1, 1});
    Tensor bumped = apply_lora(tape, id4, ones_a, ones_b, 1.0, 1);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(bumped.values()[i * 4 + j] == (i == j ? 2.0 : 1.0));
        }
    }

    const int c = 16, r = 4;
    Tensor wc = Tensor::zeros({c, c});
    for (double& v : wc.values()) v = rng.gaussian();
    Tensor ar = Tensor::zeros({c, r});
    for (double& v : ar.values()) v = rng.gaussian();
    Tensor br = Tensor::zeros({r, c});
    for (double& v : br.values()) v = rng.gaussian();
    Tensor delta = sub(tape, apply_lora(tape, wc, ar, br, 8.0, r), wc);
    std::vector<double> dv(delta.values().begin(), delta.values().end());
    const std::vector<double> sv = oracle::singular_values(dv, c, c);
    REQUIRE(sv.size() == static_cast<std::size_t>(c));
    CHECK(sv[0] > 1e-3);
    for (int i = r; i < c; ++i) CHECK(sv[static_cast<std::size_t>(i)] < 1e-10);

    CHECK_THROWS_AS(apply_lora(tape, w, a0, b0, 2.0, 5), ConfigError);
    Tensor bad_b = Tensor::zeros({3, 4});
    CHECK_THROWS_AS(apply_lora(tape, w, a0, bad_b, 2.0, 2), ShapeError);
}

TEST_CASE("zero-initialized adapters leave pipeline logits bit-identical") {
    ModelConfig cfg = tiny_config();
    Rng rng(17, "zeroinit");
    Model model(cfg, rng);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    std::vector<std::uint8_t> coarse(static_cast<std::size_t>(cfg.tokens_per_frame()), 1);
    const std::vector<int> input = {Vocabulary::kBos, 4, 7};

    Tape tape;
    tape.set_recording(false);
    Tensor with = model.decode_forward(
        tape, model.build_memory(tape, a, b, coarse, MaskMode::zero), input);
    model.set_lora_enabled(false);
    Tensor without = model.decode_forward(
        tape, model.build_memory(tape, a, b, coarse, MaskMode::zero), input);
    CHECK(bitwise_equal(with, without));

    model.set_lora_enabled(true);
    randomize_adapters(model, rng);
    Tensor adapted = model.decode_forward(
        tape, model.build_memory(tape, a, b, coarse, MaskMode::zero), input);
    CHECK_FALSE(bitwise_equal(adapted, without));
}

TEST_CASE("zero projector gives all-zero memory; zero head decodes by tie-break") {
    ModelConfig cfg = tiny_config();
    Rng rng(19, "zerohead");
    Model model(cfg, rng);
    for (const char* name : {"projector.W", "projector.b"}) {
        Tensor t = model.params().at(name);
        std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    Tape tape;
    tape.set_recording(false);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    std::vector<std::uint8_t> coarse(static_cast<std::size_t>(cfg.tokens_per_frame()), 1);
    Tensor memory = model.build_memory(tape, a, b, coarse, MaskMode::zero);
    for (double v : memory.values()) CHECK(v == 0.0);

    for (const char* name : {"head.W", "head.b"}) {
        Tensor t = model.params().at(name);
        std::fill(t.values().begin(), t.values().end(), 0.0);
    }
    Tensor logits = model.decode_forward(tape, memory, {Vocabulary::kBos});
    for (double v : logits.values()) CHECK(v == 0.0);

    const std::vector<int> flat = model.greedy_decode(memory);
    REQUIRE(flat.size() == static_cast<std::size_t>(cfg.max_caption_len - 1));
    for (int id : flat) CHECK(id == Vocabulary::kPad);

    model.params().at("head.b").values()[Vocabulary::kEos] = 1.0;
    CHECK(model.greedy_decode(memory).empty());
}

TEST_CASE("causal self-attention and dense cross-attention") {
    ModelConfig cfg = tiny_config();
    Rng rng(23, "causal");
    Model model(cfg, rng);
    randomize_adapters(model, rng);
    Tape tape;
    tape.set_recording(false);
    Tensor memory = Tensor::zeros({4, cfg.decoder_width});
    for (double& v : memory.values()) v = rng.gaussian();

    const std::vector<int> base = {Vocabulary::kBos, 5, 7, 4};
    std::vector<int> bumped = base;
    bumped.back() = 9;
    Tensor l1 = model.decode_forward(tape, memory, base);
    Tensor l2 = model.decode_forward(tape, memory, bumped);
    const int k = cfg.vocab_size;
    for (int t = 0; t < 3; ++t) {
        for (int j = 0; j < k; ++j) {
            const std::size_t idx = static_cast<std::size_t>(t) * k + j;
            CHECK(l1.values()[idx] == l2.values()[idx]);
        }
    }
    bool last_row_differs = false;
    for (int j = 0; j < k; ++j) {
        const std::size_t idx = static_cast<std::size_t>(3) * k + j;
        if (l1.values()[idx] != l2.values()[idx]) last_row_differs = true;
    }
    CHECK(last_row_differs);

    for (int row = 0; row < 4; ++row) {
        Tensor perturbed = Tensor::from(
            memory.shape(), {memory.values().begin(), memory.values().end()});
        perturbed.values()[static_cast<std::size_t>(row) * cfg.decoder_width + 2] += 0.25;
        Tensor lp = model.decode_forward(tape, perturbed, base);
        for (int t = 0; t < l1.dim(0); ++t) {
            bool row_changed = false;
            for (int j = 0; j < k; ++j) {
                const std::size_t idx = static_cast<std::size_t>(t) * k + j;
                if (lp.values()[idx] != l1.values()[idx]) row_changed = true;
            }
            CHECK(row_changed);
        }
    }
}

TEST_CASE("greedy decode is self-consistent under teacher forcing") {
    ModelConfig cfg = tiny_config();
    for (int seed : {29, 31, 37}) {
        Rng rng(static_cast<std::uint64_t>(seed), "teacher");
        Model model(cfg, rng);
        randomize_adapters(model, rng);
        Tensor memory = Tensor::zeros({6, cfg.decoder_width});
        for (double& v : memory.values()) v = rng.gaussian();

        const std::vector<int> out = model.greedy_decode(memory);
        CHECK(out == model.greedy_decode(memory));
        std::vector<int> input = {Vocabulary::kBos};
        input.insert(input.end(), out.begin(), out.end());
        Tape tape;
        tape.set_recording(false);
        Tensor logits = model.decode_forward(tape, memory, input);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(argmax_row(logits, static_cast<int>(i)) == out[i]);
        }
        if (static_cast<int>(input.size()) < cfg.max_caption_len) {
            CHECK(argmax_row(logits, static_cast<int>(out.size())) == Vocabulary::kEos);
        }
    }
}

TEST_CASE("perturbing tokens at masked positions never reaches the logits") {
    ModelConfig cfg = tiny_config();
    Rng rng(41, "invariance");
    Model model(cfg, rng);
    randomize_adapters(model, rng);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    const int hw = cfg.tokens_per_frame();
    const int d = cfg.decoder_width;
    const std::vector<int> input = {Vocabulary::kBos, 6, 4};

    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::uint8_t> coarse(static_cast<std::size_t>(hw), 0);
        int kept = 0;
        for (auto& m : coarse) {
            m = rng.coin(0.5) ? 1 : 0;
            kept += m;
        }
        if (kept == 0) coarse[0] = 1;

        Tape tape;
        tape.set_recording(false);
        auto [f1, f2] = model.encode_frames(tape, a, b);
        auto perturb = [&](const Tensor& f) {
            Tensor copy = Tensor::from(f.shape(), {f.values().begin(), f.values().end()});
            for (int i = 0; i < hw; ++i) {
                if (coarse[static_cast<std::size_t>(i)]) continue;
                for (int j = 0; j < d; ++j) {
                    copy.values()[static_cast<std::size_t>(i) * d + j] += rng.gaussian();
                }
            }
            return copy;
        };
        Tensor p1 = perturb(f1), p2 = perturb(f2);

        for (MaskMode mode : {MaskMode::zero, MaskMode::drop}) {
            Tensor clean = model.decode_forward(
                tape, filter_tokens(tape, f1, f2, coarse, mode), input);
            Tensor noisy = model.decode_forward(
                tape, filter_tokens(tape, p1, p2, coarse, mode), input);
            CHECK(bitwise_equal(clean, noisy));
        }
    }
}

TEST_CASE("composite loss gradients match finite differences") {
    ModelConfig cfg = tiny_config();
    Rng rng(43, "fdmodel");
    Model model(cfg, rng);
    randomize_adapters(model, rng);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    std::vector<std::uint8_t> coarse = {1, 0, 1, 1};
    const std::vector<int> caption = {4, 7, 5, 9};

    auto loss_fn = [&](MaskMode mode) {
        return [&, mode](Tape& tape) {
            Tensor memory = model.build_memory(tape, a, b, coarse, mode);
            return model.caption_loss(tape, memory, caption);
        };
    };

    for (const char* name :
         {"lora.q.A", "lora.q.B", "lora.v.B", "projector.W", "projector.b", "embed.tok",
          "embed.pos", "decoder.layer0.self.Wq", "decoder.layer0.cross.Wk",
          "decoder.layer0.ffn.W1", "decoder.layer0.ln2.g", "decoder.ln_f.b", "head.W",
          "head.b"}) {
        Tensor p = model.params().at(name);
        CAPTURE(name);
        CHECK(fd_check(p, loss_fn(MaskMode::zero), 1e-4) < 1e-4);
    }
    Tensor pw = model.params().at("projector.W");
    CHECK(fd_check(pw, loss_fn(MaskMode::drop), 1e-4) < 1e-4);

    Tape tape;
    Tensor loss = loss_fn(MaskMode::zero)(tape);
    backward(loss, tape);
    CHECK_FALSE(model.params().at("encoder.patch.W").requires_grad());
    CHECK_FALSE(model.params().at("encoder.block0.attn.Wq").requires_grad());
    CHECK(model.params().at("encoder.patch.W").impl()->grad.empty());
    CHECK(model.params().at("encoder.block0.attn.Wq").impl()->grad.empty());
    bool lora_has_signal = false;
    for (double g : model.params().at("lora.q.A").grad()) {
        if (g != 0.0) lora_has_signal = true;
    }
    CHECK(lora_has_signal);
}

TEST_CASE("checkpoint round trip restores config, values, and freeze flags") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mvcc_model_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    ModelConfig cfg = tiny_config();
    cfg.lora_alpha = 2.5;
    Rng rng(47, "ckpt");
    Model model(cfg, rng);
    randomize_adapters(model, rng);
    model.save(path);
    Model loaded = Model::load(path);

    CHECK(loaded.config().image_size == cfg.image_size);
    CHECK(loaded.config().patch_stride == cfg.patch_stride);
    CHECK(loaded.config().channels == cfg.channels);
    CHECK(loaded.config().encoder_blocks == cfg.encoder_blocks);
    CHECK(loaded.config().heads == cfg.heads);
    CHECK(loaded.config().decoder_layers == cfg.decoder_layers);
    CHECK(loaded.config().decoder_width == cfg.decoder_width);
    CHECK(loaded.config().vocab_size == cfg.vocab_size);
    CHECK(loaded.config().max_caption_len == cfg.max_caption_len);
    CHECK(loaded.config().lora_rank == cfg.lora_rank);
    CHECK(loaded.config().lora_alpha == cfg.lora_alpha);

    const auto& src = model.params().items();
    const auto& dst = loaded.params().items();
    REQUIRE(src.size() == dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        CHECK(src[i].first == dst[i].first);
        CHECK(bitwise_equal(src[i].second, dst[i].second));
        CHECK(src[i].second.requires_grad() == dst[i].second.requires_grad());
    }

    Tape tape;
    tape.set_recording(false);
    Image a = random_image(cfg.image_size, rng), b = random_image(cfg.image_size, rng);
    std::vector<std::uint8_t> coarse(static_cast<std::size_t>(cfg.tokens_per_frame()), 1);
    const std::vector<int> input = {Vocabulary::kBos, 3, 8};
    Tensor l1 = model.decode_forward(
        tape, model.build_memory(tape, a, b, coarse, MaskMode::zero), input);
    Tensor l2 = loaded.decode_forward(
        tape, loaded.build_memory(tape, a, b, coarse, MaskMode::zero), input);
    CHECK(bitwise_equal(l1, l2));

    const std::string no_meta = (dir / "no_meta.ckpt").string();
    save_checkpoint(no_meta, {{"head.W", Tensor::zeros({2, 2})}});
    CHECK_THROWS_AS(Model::load(no_meta), ConfigError);

    auto tensors = load_checkpoint(path);
    auto extra = tensors;
    extra.emplace_back("stray.W", Tensor::zeros({2}));
    const std::string extra_path = (dir / "extra.ckpt").string();
    save_checkpoint(extra_path, extra);
    CHECK_THROWS_AS(Model::load(extra_path), ConfigError);

    auto missing = tensors;
    missing.erase(missing.begin());
    const std::string missing_path = (dir / "missing.ckpt").string();
    save_checkpoint(missing_path, missing);
    CHECK_THROWS_AS(Model::load(missing_path), ConfigError);

    fs::remove_all(dir);
}

TEST_CASE("decode and loss input validation") {
    ModelConfig cfg = tiny_config();
    Rng rng(53, "validate");
    Model model(cfg, rng);
    Tape tape;
    tape.set_recording(false);
    Tensor memory = Tensor::zeros({4, cfg.decoder_width});
    for (double& v : memory.values()) v = rng.gaussian();

    CHECK_THROWS_AS(model.decode_forward(tape, memory, {Vocabulary::kBos, cfg.vocab_size}),
                    ContractError);
    CHECK_THROWS_AS(model.decode_forward(tape, memory, {Vocabulary::kBos, -1}), ContractError);
    CHECK_THROWS_AS(model.decode_forward(tape, memory, {}), ContractError);
    const std::vector<int> too_long(static_cast<std::size_t>(cfg.max_caption_len) + 1, 4);
    CHECK_THROWS_AS(model.decode_forward(tape, memory, too_long), ContractError);
    Tensor narrow = Tensor::zeros({4, cfg.decoder_width / 2});
    CHECK_THROWS_AS(model.decode_forward(tape, narrow, {Vocabulary::kBos}), ShapeError);

    Tensor loss = model.caption_loss(tape, memory, {});
    CHECK(loss.item() > 0.0);
    const std::vector<int> long_caption(20, 5);
    Tensor truncated = model.caption_loss(tape, memory, long_caption);
    CHECK(std::isfinite(truncated.item()));
}
