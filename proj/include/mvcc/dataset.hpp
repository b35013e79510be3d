#pragma once

#include <string>
#include <vector>

#include "mvcc/image.hpp"
#include "mvcc/mask.hpp"
#include "mvcc/rng.hpp"

namespace mvcc {

struct Instance {
    std::string id;
    std::string img_a;  // resolved path
    std::string img_b;
    std::string mask;   // empty when the record has none
    std::vector<std::string> captions;
    std::string split;  // train | val | test
};

// JSON-lines annotations: {"id", "img_a", "img_b", "mask"?, "captions", "split"},
// paths relative to image_root. Throws IngestionError naming the offending
// record.
std::vector<Instance> load_dataset(const std::string& annotation_path,
                                   const std::string& image_root);

// Reads an instance mask and validates it is strictly binary and matches the
// given image size.
Mask load_instance_mask(const Instance& inst, int height, int width);

struct GenConfig {
    std::string out_dir;
    int n = 100;
    std::uint64_t seed = 0;
    int image_size = 64;
    bool distractors = true;
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
};

// Writes images/, masks/ and annotations.jsonl under out_dir. Deterministic
// in every byte given the config.
void generate_dataset(const GenConfig& cfg);

// Template grammar shared by the generator and the consistency checker.
// kind: "building" | "road" | "none" (no change); event: "appear" | "disappear".
// loc_bin 0..4 = top left, top right, bottom left, bottom right, center
// (ignored for roads and no-change).
std::vector<std::string> caption_templates(const std::string& kind, const std::string& event,
                                           int loc_bin);

// Nearest location anchor for a mask centroid, bins as above.
int location_bin(double cy, double cx, int image_size);

struct CheckOutcome {
    bool ok = false;
    std::string detail;
};

// Rule-based consistency oracle: derives kind/event/location from the files
// alone and verifies every caption is an exact template for that event.
CheckOutcome check_consistency(const Image& a, const Image& b, const Mask& mask,
                               const std::vector<std::string>& captions);

}  // namespace mvcc
