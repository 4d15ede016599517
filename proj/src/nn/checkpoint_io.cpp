#include <fstream>
#include <stdexcept>

#include "pai/nn.hpp"

namespace pai {

void save_checkpoint(const MaskedNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out << checkpoint_json(net).dump() << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

MaskedNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace pai
