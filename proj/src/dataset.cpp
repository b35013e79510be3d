#include "mvcc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace mvcc {

namespace {

const char* kLocPhrases[5] = {"the top left", "the top right", "the bottom left",
                              "the bottom right", "the center"};

std::string resolve(const std::string& root, const std::string& rel) {
    if (rel.empty() || fs::path(rel).is_absolute()) return rel;
    return (fs::path(root) / rel).string();
}

}  // namespace

std::vector<std::string> caption_templates(const std::string& kind, const std::string& event,
                                           int loc_bin) {
    if (kind == "none") {
        return {"the scene is the same", "there is no change", "nothing has changed in the scene"};
    }
    if (kind == "building") {
        if (loc_bin < 0 || loc_bin > 4) throw ContractError("location bin out of range");
        const std::string loc = kLocPhrases[loc_bin];
        if (event == "appear") {
            return {"a building appears in " + loc, "a new building is built in " + loc,
                    "a building has been constructed in " + loc};
        }
        return {"the building in " + loc + " disappears",
                "the building in " + loc + " is demolished",
                "a building in " + loc + " has been removed"};
    }
    if (kind == "road") {
        if (event == "appear") {
            return {"a road appears across the scene", "a new road is built across the scene",
                    "a road has been constructed across the scene"};
        }
        return {"the road across the scene disappears",
                "the road across the scene has been removed", "a road is removed from the scene"};
    }
    throw ContractError("unknown object kind '" + kind + "'");
}

int location_bin(double cy, double cx, int image_size) {
    const double q = image_size / 4.0;
    const double anchors[5][2] = {{q, q},         {q, 3 * q},     {3 * q, q},
                                  {3 * q, 3 * q}, {2 * q, 2 * q}};
    int best = 0;
    double best_d = 1e30;
    for (int i = 0; i < 5; ++i) {
        const double dy = cy - anchors[i][0];
        const double dx = cx - anchors[i][1];
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

// ---- generator -------------------------------------------------------------

namespace {

struct Rect {
    int y0, x0, h, w;

    bool overlaps(const Rect& o, int margin = 0) const {
        return y0 - margin < o.y0 + o.h && o.y0 - margin < y0 + h && x0 - margin < o.x0 + o.w &&
               o.x0 - margin < x0 + w;
    }
};

void fill_rect(Image& img, const Rect& r, double level, Rng& rng) {
    for (int y = r.y0; y < r.y0 + r.h; ++y) {
        for (int x = r.x0; x < r.x0 + r.w; ++x) {
            const double v = level + rng.uniform(-0.02, 0.02);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
        }
    }
}

struct Scene {
    std::string kind;   // building | road | none
    std::string event;  // appear | disappear
    int loc_bin = -1;
    Rect footprint{0, 0, 0, 0};
    double object_level = 0.0;
    bool horizontal_road = false;
};

Image make_background(int size, Rng& rng) {
    const double r = rng.uniform(0.42, 0.50);
    const double g = r + rng.uniform(-0.03, 0.02);
    const double b = r + rng.uniform(-0.06, -0.01);
    Image img = Image::zeros(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double n = rng.uniform(-0.02, 0.02);
            img.at(y, x, 0) = r + n;
            img.at(y, x, 1) = g + n;
            img.at(y, x, 2) = b + n;
        }
    }
    return img;
}

Scene sample_scene(int size, Rng& rng) {
    Scene s;
    if (rng.uniform() < 0.15) {
        s.kind = "none";
        return s;
    }
    s.event = rng.coin(0.5) ? "appear" : "disappear";
    if (rng.uniform() < 0.65) {
        s.kind = "building";
        s.loc_bin = rng.range(0, 4);
        const int q = size / 4;
        const int ay = (s.loc_bin == 4) ? 2 * q : (s.loc_bin < 2 ? q : 3 * q);
        const int ax = (s.loc_bin == 4) ? 2 * q : (s.loc_bin % 2 == 0 ? q : 3 * q);
        const int h = rng.range(16, 24);
        const int w = rng.range(16, 24);
        const int cy = ay + rng.range(-7, 7);
        const int cx = ax + rng.range(-7, 7);
        const int y0 = std::clamp(cy - h / 2, 1, size - 1 - h);
        const int x0 = std::clamp(cx - w / 2, 1, size - 1 - w);
        s.footprint = {y0, x0, h, w};
        s.object_level = rng.uniform(0.85, 0.95);
    } else {
        s.kind = "road";
        s.horizontal_road = rng.coin(0.5);
        const int width = rng.range(6, 10);
        const int off = rng.range(4, size - 4 - width);
        s.footprint = s.horizontal_road ? Rect{off, 0, width, size} : Rect{0, off, size, width};
        s.object_level = rng.uniform(0.06, 0.12);
    }
    return s;
}

void add_speckle(Image& img, const Rect& avoid, bool has_event, Rng& rng) {
    const int count = rng.range(6, 12);
    for (int i = 0; i < count; ++i) {
        int y = 0, x = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
            y = rng.range(1, img.height - 2);
            x = rng.range(1, img.width - 2);
            placed = !has_event || !Rect{y - 1, x - 1, 3, 3}.overlaps(avoid);
        }
        if (!placed) continue;
        const double jitter = rng.uniform(-0.04, 0.04);
        const double g[3] = {0.18 + jitter, 0.45 + jitter, 0.15 + jitter};
        const int dy[5] = {0, -1, 1, 0, 0};
        const int dx[5] = {0, 0, 0, -1, 1};
        for (int k = 0; k < 5; ++k) {
            for (int c = 0; c < 3; ++c) img.at(y + dy[k], x + dx[k], c) = g[c];
        }
    }
}

}  // namespace

void generate_dataset(const GenConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("generate_dataset: n must be >= 1");
    if (cfg.image_size < 32 || cfg.image_size % 16 != 0) {
        throw ConfigError("generate_dataset: image size must be a multiple of 16, >= 32");
    }
    const double frac_sum = cfg.train_frac + cfg.val_frac + cfg.test_frac;
    if (std::abs(frac_sum - 1.0) > 1e-9) {
        throw ConfigError("generate_dataset: split fractions must sum to 1");
    }
    std::error_code ec;
    fs::create_directories(fs::path(cfg.out_dir) / "images", ec);
    fs::create_directories(fs::path(cfg.out_dir) / "masks", ec);
    if (ec) throw IngestionError("cannot create output directories under '" + cfg.out_dir + "'");

    const int n_train = static_cast<int>(std::llround(cfg.n * cfg.train_frac));
    const int n_val = static_cast<int>(std::llround(cfg.n * cfg.val_frac));

    std::ofstream ann(fs::path(cfg.out_dir) / "annotations.jsonl", std::ios::trunc);
    if (!ann) throw IngestionError("cannot write annotations under '" + cfg.out_dir + "'");

    const int size = cfg.image_size;
    for (int idx = 0; idx < cfg.n; ++idx) {
        Rng rng(cfg.seed, "inst" + std::to_string(idx));
        const Scene scene = sample_scene(size, rng);

        Image frame_a = make_background(size, rng);
        Image frame_b = frame_a;

        // static buildings shared by both frames
        const int n_static = rng.range(0, 2);
        std::vector<Rect> occupied;
        const bool has_event = scene.kind != "none";
        if (has_event) occupied.push_back(scene.footprint);
        for (int k = 0; k < n_static; ++k) {
            for (int attempt = 0; attempt < 50; ++attempt) {
                const int h = rng.range(10, 20);
                const int w = rng.range(10, 20);
                const int y0 = rng.range(1, size - 1 - h);
                const int x0 = rng.range(1, size - 1 - w);
                const Rect r{y0, x0, h, w};
                bool clash = false;
                for (const Rect& o : occupied) clash = clash || r.overlaps(o, 2);
                if (clash) continue;
                occupied.push_back(r);
                const double level = rng.uniform(0.85, 0.95);
                // identical texture in both frames
                std::vector<double> tex(static_cast<std::size_t>(r.h) * r.w);
                for (double& t : tex) t = level + rng.uniform(-0.02, 0.02);
                for (int y = 0; y < r.h; ++y) {
                    for (int x = 0; x < r.w; ++x) {
                        const double v = tex[static_cast<std::size_t>(y) * r.w + x];
                        for (int c = 0; c < 3; ++c) {
                            frame_a.at(r.y0 + y, r.x0 + x, c) = v;
                            frame_b.at(r.y0 + y, r.x0 + x, c) = v;
                        }
                    }
                }
                break;
            }
        }

        Mask mask = Mask::zeros(size, size);
        if (has_event) {
            Image& target = scene.event == "appear" ? frame_b : frame_a;
            fill_rect(target, scene.footprint, scene.object_level, rng);
            for (int y = scene.footprint.y0; y < scene.footprint.y0 + scene.footprint.h; ++y) {
                for (int x = scene.footprint.x0; x < scene.footprint.x0 + scene.footprint.w; ++x) {
                    mask.at(y, x) = 1;
                }
            }
        }

        if (cfg.distractors) {
            add_speckle(frame_a, scene.footprint, has_event, rng);
            add_speckle(frame_b, scene.footprint, has_event, rng);
            // vegetation growth: a patch in one frame only, large enough to
            // fool a naive differencing detector, still outside the mask
            const int n_growth = rng.range(0, 2);
            for (int k = 0; k < n_growth; ++k) {
                for (int attempt = 0; attempt < 30; ++attempt) {
                    const int side = rng.range(3, 5);
                    const int y0 = rng.range(1, size - 1 - side);
                    const int x0 = rng.range(1, size - 1 - side);
                    const Rect r{y0, x0, side, side};
                    if (has_event && r.overlaps(scene.footprint, 1)) continue;
                    Image& target = rng.coin(0.5) ? frame_a : frame_b;
                    const double j = rng.uniform(-0.02, 0.02);
                    for (int y = y0; y < y0 + side; ++y) {
                        for (int x = x0; x < x0 + side; ++x) {
                            target.at(y, x, 0) = 0.05 + j;
                            target.at(y, x, 1) = 0.18 + j;
                            target.at(y, x, 2) = 0.04 + j;
                        }
                    }
                    break;
                }
            }
            const double shift = (rng.coin(0.5) ? 1.0 : -1.0) * rng.uniform(0.03, 0.07);
            for (double& v : frame_b.pixels) v += shift;
        }

        // captions: 2-3 distinct templates
        std::vector<std::string> templates =
            caption_templates(scene.kind, scene.event, scene.loc_bin);
        std::vector<int> order = {0, 1, 2};
        rng.shuffle(order);
        const int n_caps = rng.range(2, 3);
        std::vector<std::string> captions;
        for (int k = 0; k < n_caps; ++k) captions.push_back(templates[order[k]]);

        char id_buf[32];
        std::snprintf(id_buf, sizeof(id_buf), "inst_%05d", idx);
        const std::string id(id_buf);
        const std::string rel_a = "images/" + id + "_a.ppm";
        const std::string rel_b = "images/" + id + "_b.ppm";
        const std::string rel_m = "masks/" + id + ".pgm";
        write_image((fs::path(cfg.out_dir) / rel_a).string(), frame_a);
        write_image((fs::path(cfg.out_dir) / rel_b).string(), frame_b);
        write_image((fs::path(cfg.out_dir) / rel_m).string(), mask_to_image(mask));

        nlohmann::json rec;
        rec["id"] = id;
        rec["img_a"] = rel_a;
        rec["img_b"] = rel_b;
        rec["mask"] = rel_m;
        rec["captions"] = captions;
        rec["split"] = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
        ann << rec.dump() << "\n";
    }
    if (!ann) throw IngestionError("short write to annotations under '" + cfg.out_dir + "'");
}

// ---- loader ----------------------------------------------------------------

std::vector<Instance> load_dataset(const std::string& annotation_path,
                                   const std::string& image_root) {
    std::ifstream f(annotation_path);
    if (!f) throw IngestionError("cannot open annotations '" + annotation_path + "'");
    std::vector<Instance> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError("annotations line " + std::to_string(line_no) +
                                 " is not valid JSON: " + e.what());
        }
        Instance inst;
        inst.id = j.value("id", "");
        const std::string where =
            inst.id.empty() ? "line " + std::to_string(line_no) : "record '" + inst.id + "'";
        if (inst.id.empty()) throw IngestionError("annotations " + where + " lacks an id");
        if (!j.contains("img_a") || !j.contains("img_b") || !j["img_a"].is_string() ||
            !j["img_b"].is_string()) {
            throw IngestionError(where + " lacks img_a/img_b paths");
        }
        inst.img_a = resolve(image_root, j["img_a"].get<std::string>());
        inst.img_b = resolve(image_root, j["img_b"].get<std::string>());
        if (j.contains("mask")) {
            if (!j["mask"].is_string()) throw IngestionError(where + " has a non-string mask");
            inst.mask = resolve(image_root, j["mask"].get<std::string>());
        }
        if (!j.contains("captions") || !j["captions"].is_array() || j["captions"].empty()) {
            throw IngestionError(where + " lacks a non-empty captions array");
        }
        for (const auto& c : j["captions"]) {
            if (!c.is_string()) throw IngestionError(where + " has a non-string caption");
            inst.captions.push_back(c.get<std::string>());
        }
        inst.split = j.value("split", "");
        if (inst.split != "train" && inst.split != "val" && inst.split != "test") {
            throw IngestionError(where + " has invalid split '" + inst.split + "'");
        }
        if (!fs::exists(inst.img_a) || !fs::exists(inst.img_b)) {
            throw IngestionError(where + " references missing image files");
        }
        if (!inst.mask.empty() && !fs::exists(inst.mask)) {
            throw IngestionError(where + " references missing mask file '" + inst.mask + "'");
        }
        out.push_back(std::move(inst));
    }
    if (out.empty()) throw IngestionError("annotations '" + annotation_path + "' hold no records");
    return out;
}

Mask load_instance_mask(const Instance& inst, int height, int width) {
    if (inst.mask.empty()) {
        throw IngestionError("record '" + inst.id + "' has no mask file");
    }
    const Image img = read_image(inst.mask);
    if (img.channels != 1) {
        throw IngestionError("record '" + inst.id + "': mask is not single-channel");
    }
    for (double v : img.pixels) {
        if (v != 0.0 && v != 1.0) {
            throw IngestionError("record '" + inst.id + "': mask is not binary");
        }
    }
    if (img.height != height || img.width != width) {
        throw IngestionError("record '" + inst.id + "': mask size " + std::to_string(img.height) +
                             "x" + std::to_string(img.width) + " does not match images " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    return mask_from_image(img);
}

// ---- consistency checker ---------------------------------------------------

namespace {

double outside_median_gray(const Image& img, const Mask& mask) {
    std::vector<double> vals;
    vals.reserve(mask.values.size());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (mask.at(y, x)) continue;
            vals.push_back((img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0);
        }
    }
    if (vals.empty()) return 0.5;
    std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2),
                     vals.end());
    return vals[vals.size() / 2];
}

double masked_deviation(const Image& img, const Mask& mask, double reference) {
    double total = 0.0;
    int count = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!mask.at(y, x)) continue;
            const double gray = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
            total += std::abs(gray - reference);
            ++count;
        }
    }
    return count ? total / count : 0.0;
}

bool caption_in(const std::vector<std::string>& pool, const std::string& caption) {
    return std::find(pool.begin(), pool.end(), caption) != pool.end();
}

}  // namespace

CheckOutcome check_consistency(const Image& a, const Image& b, const Mask& mask,
                               const std::vector<std::string>& captions) {
    if (captions.empty()) return {false, "no captions"};
    if (mask.popcount() == 0) {
        const auto pool = caption_templates("none", "", -1);
        for (const auto& c : captions) {
            if (!caption_in(pool, c)) return {false, "caption '" + c + "' is not a no-change form"};
        }
        return {true, "no change"};
    }

    bool touches_border = false;
    double cy = 0.0, cx = 0.0;
    int count = 0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            cy += y;
            cx += x;
            ++count;
            if (y == 0 || x == 0 || y == mask.height - 1 || x == mask.width - 1) {
                touches_border = true;
            }
        }
    }
    cy /= count;
    cx /= count;
    const std::string kind = touches_border ? "road" : "building";
    const int bin = location_bin(cy, cx, mask.height);

    const double med_a = outside_median_gray(a, mask);
    const double med_b = outside_median_gray(b, mask);
    const double dev_a = masked_deviation(a, mask, med_a);
    const double dev_b = masked_deviation(b, mask, med_b);
    const std::string event = dev_b > dev_a ? "appear" : "disappear";

    const auto pool = caption_templates(kind, event, bin);
    for (const auto& c : captions) {
        if (!caption_in(pool, c)) {
            return {false, "caption '" + c + "' does not describe a " + kind + " " + event +
                               " at bin " + std::to_string(bin)};
        }
    }
    return {true, kind + " " + event};
}

}  // namespace mvcc
