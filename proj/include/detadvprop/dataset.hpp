#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/boxes.hpp"
#include "detadvprop/checkpoint.hpp"
#include "detadvprop/image_io.hpp"
#include "detadvprop/trainer.hpp"

namespace detadv {

struct DatasetItem {
  int id = 0;
  std::string file;
  int width = 0, height = 0;
  Annotation ann;
};

// In-memory view of a generated dataset directory (index.json + images).
struct Dataset {
  std::string dir;
  std::vector<DatasetItem> items;
  std::vector<std::string> classes;
  std::vector<int> train_ids, val_ids;

  int num_classes() const { return static_cast<int>(classes.size()); }

  const DatasetItem& by_id(int id) const {
    for (const DatasetItem& item : items)
      if (item.id == id) return item;
    throw RuntimeError(detail::concat("dataset: no image with id ", id));
  }
};

inline Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  const json index = json::parse(read_text_file(dir + "/index.json"));
  ds.classes = index.at("classes").get<std::vector<std::string>>();
  ds.train_ids = index.at("split").at("train").get<std::vector<int>>();
  ds.val_ids = index.at("split").at("val").get<std::vector<int>>();
  for (const json& im : index.at("images")) {
    DatasetItem item;
    item.id = im.at("id").get<int>();
    item.file = im.at("file").get<std::string>();
    item.width = im.at("width").get<int>();
    item.height = im.at("height").get<int>();
    for (const json& a : im.at("annotations")) {
      const auto b = a.at("bbox").get<std::vector<double>>();
      DETADV_CHECK(b.size() == 4, "dataset: bbox must have 4 entries");
      item.ann.boxes.push_back(Box{b[0], b[1], b[2], b[3]});
      item.ann.classes.push_back(a.at("class").get<int>());
    }
    item.ann.validate(item.height, item.width, ds.num_classes());
    ds.items.push_back(std::move(item));
  }
  return ds;
}

inline TrainItem load_train_item(const Dataset& ds, int id) {
  const DatasetItem& item = ds.by_id(id);
  return TrainItem{read_ppm(ds.dir + "/" + item.file), item.ann};
}

// Preloads both splits for the training loop.
inline TrainData load_train_data(const Dataset& ds) {
  TrainData data;
  data.num_classes = ds.num_classes();
  for (int id : ds.train_ids) data.train.push_back(load_train_item(ds, id));
  for (int id : ds.val_ids) data.val.push_back(load_train_item(ds, id));
  DETADV_CHECK(!data.train.empty(), "dataset '", ds.dir, "' has an empty train split");
  data.image_h = ds.items.front().height;
  data.image_w = ds.items.front().width;
  return data;
}

}  // namespace detadv
