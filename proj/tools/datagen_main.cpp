// Writes a synthetic face corpus for demos and desk-scale training runs.
#include <CLI11.hpp>

#include "qv/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic face corpus generator"};
  std::string out = "faces";
  std::int64_t count = 200;
  std::int64_t size = 64;
  std::uint64_t seed = 7;
  app.add_option("--out", out, "output directory");
  app.add_option("--n", count, "number of images");
  app.add_option("--size", size, "image side in pixels");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  qv::synthetic::write_corpus(out, count, size, seed);
  return 0;
}
