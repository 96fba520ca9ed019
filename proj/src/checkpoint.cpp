#include "skinseg/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace skinseg {

namespace {

void write_config(std::ostream& os, const ModelConfig& cfg) {
  os << "input_size " << cfg.input_size << "\n";
  os << "base_filters " << cfg.base_filters << "\n";
  os << "interaction_filters " << cfg.interaction_filters[0] << " " << cfg.interaction_filters[1]
     << " " << cfg.interaction_filters[2] << "\n";
  os << "expansion_factor " << cfg.expansion_factor << "\n";
  os << "decoder_filters " << cfg.decoder_filters[0] << " " << cfg.decoder_filters[1] << " "
     << cfg.decoder_filters[2] << "\n";
  os << "reduction_ratio " << cfg.reduction_ratio << "\n";
  os << "seed " << cfg.seed << "\n";
}

ModelConfig read_config(std::istream& is) {
  ModelConfig cfg;
  std::string key;
  is >> key;
  if (key != "input_size") throw DataError("checkpoint: expected input_size");
  is >> cfg.input_size;
  is >> key >> cfg.base_filters;
  is >> key >> cfg.interaction_filters[0] >> cfg.interaction_filters[1] >>
      cfg.interaction_filters[2];
  is >> key >> cfg.expansion_factor;
  is >> key >> cfg.decoder_filters[0] >> cfg.decoder_filters[1] >> cfg.decoder_filters[2];
  is >> key >> cfg.reduction_ratio;
  is >> key >> cfg.seed;
  if (!is) throw DataError("checkpoint: truncated config header");
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
  os << kCheckpointMagic << "\n";
  write_config(os, model.config());
  auto refs = model.param_refs();
  os << "tensors " << refs.size() << "\n";
  for (const auto& r : refs) {
    os << r.name << " " << r.rows << " " << r.cols << "\n";
  }
  for (const auto& r : refs) {
    os.write(reinterpret_cast<const char*>(r.value),
             static_cast<std::streamsize>(r.size() * sizeof(Real)));
  }
  if (!os) throw DataError("failed writing checkpoint: " + path.string());
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != kCheckpointMagic) {
    throw DataError("checkpoint version mismatch in " + path.string() + " (magic '" + magic +
                    "', expected '" + kCheckpointMagic + "')");
  }
  const ModelConfig cfg = read_config(is);
  std::size_t count = 0;
  std::string key;
  is >> key >> count;
  if (key != "tensors") throw DataError("checkpoint: expected tensor directory");

  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) is >> e.name >> e.rows >> e.cols;
  is.ignore(1);  // trailing newline before the binary section
  if (!is) throw DataError("checkpoint: truncated tensor directory");

  auto model = std::make_unique<Model>(cfg);
  auto refs = model->param_refs();
  if (refs.size() != entries.size()) {
    throw DataError("checkpoint: tensor count disagrees with rebuilt model");
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].name != entries[i].name || refs[i].rows != entries[i].rows ||
        refs[i].cols != entries[i].cols) {
      throw DataError("checkpoint: tensor '" + entries[i].name + "' disagrees with rebuilt model");
    }
    is.read(reinterpret_cast<char*>(refs[i].value),
            static_cast<std::streamsize>(refs[i].size() * sizeof(Real)));
  }
  if (!is) throw DataError("checkpoint: truncated tensor data");
  return model;
}

}  // namespace skinseg
