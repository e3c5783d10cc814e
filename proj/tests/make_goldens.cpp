// Regenerates tests/fixtures/goldens.json. Run only when a deliberate change
// to the feature, fusion or perturbation pipeline invalidates the fixtures:
//   build/tests/make_goldens tests/fixtures/goldens.json

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "copyforge/cache.hpp"
#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"
#include "copyforge/perturb.hpp"
#include "support.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_goldens <output.json>\n";
    return 1;
  }
  using namespace copyforge;
  const auto board = testing_support::checkerboard();
  const auto inverted = testing_support::checkerboard(16, 4, true);

  const SyntheticEmbedder backend(8, 0);
  const auto triple = backend.embed_image(board);

  FusionConfig fc;
  fc.input_dim = 8;
  fc.d_model = 64;
  fc.num_layers = 1;
  fc.num_heads = 4;
  fc.seed = 0;
  const Fuser fuser(fc);
  const auto fused = fuser.fuse(triple);

  const auto noisy = apply(board, PerturbationSpec::make(AttackKind::GaussianNoise, 0));

  nlohmann::ordered_json doc;
  doc["checkerboard_triple"] = {{"dim", 8}, {"seed", 0}, {"vis", triple.vis},
                                {"clip", triple.clip}, {"tex", triple.tex}};
  doc["fused_vector"] = {{"config", fc.to_json()}, {"vec", fused.vec}};
  doc["checkerboard_vs_inverted_s_fus"] = fused_similarity(fuser, backend, board, inverted);
  doc["gaussian_noise_digest"] = sha256_hex(std::span<const std::byte>(canonical_bytes(noisy)));

  std::ofstream out(argv[1]);
  out << doc.dump(2) << '\n';
  return out ? 0 : 1;
}
