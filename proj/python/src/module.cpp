#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fontaware/awloss.hpp"
#include "fontaware/corpus.hpp"
#include "fontaware/errors.hpp"
#include "fontaware/metrics.hpp"
#include "fontaware/pairs.hpp"
#include "fontaware/rollout.hpp"

namespace py = pybind11;
using namespace fontaware;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return Image(h, w, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray from_image(const Image& img) {
  FloatArray out({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

AwarenessMap to_map(const DoubleArray& a) {
  if (a.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
  AwarenessMap m;
  m.rows = static_cast<int>(a.shape(0));
  m.cols = static_cast<int>(a.shape(1));
  m.grid.assign(a.data(), a.data() + a.size());
  return m;
}

DoubleArray from_map(const AwarenessMap& m) {
  DoubleArray out({m.rows, m.cols});
  std::copy(m.grid.begin(), m.grid.end(), out.mutable_data());
  return out;
}

LossConfig loss_config(double alpha, const std::string& reduction) { return {alpha, parse_reduction(reduction)}; }

std::vector<Pixel> to_pixels(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw ShapeMismatch("expected an (n, 2) array of (y, x)");
  std::vector<Pixel> out;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back({a.at(i, 0), a.at(i, 1)});
  return out;
}

py::dict record_dict(const ManifestRecord& r) {
  py::dict d;
  d["font_id"] = r.font_id;
  d["family"] = r.family_name;
  d["category"] = to_string(r.category);
  d["letter"] = std::string(1, r.letter);
  d["image"] = r.image_path;
  d["split"] = to_string(r.split);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Glyph corpus, attention rollout, awareness-weighted loss and glyph metrics";

  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", data_error.ptr());
  py::register_exception<NonStochasticAttention>(m, "NonStochasticAttention", data_error.ptr());

  // Rollout
  m.def(
      "attention_rollout",
      [](const std::vector<FloatArray>& layers, int grid_rows, int grid_cols, double tolerance) {
        AttentionTrace t;
        t.grid_rows = grid_rows;
        t.grid_cols = grid_cols;
        for (const auto& a : layers) {
          if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw ShapeMismatch("each layer must be (heads, T, T)");
          t.heads = static_cast<int>(a.shape(0));
          t.tokens = static_cast<int>(a.shape(1));
          t.layers.emplace_back(a.data(), a.data() + a.size());
        }
        return from_map(attention_rollout(t, tolerance));
      },
      py::arg("layers"), py::arg("grid_rows"), py::arg("grid_cols"), py::arg("tolerance") = 1e-3,
      "Per-layer (heads, T, T) post-softmax attention -> (grid_rows, grid_cols) class-token rollout.");
  m.def("normalize_map", [](const DoubleArray& a) { return from_map(normalize_map(to_map(a))); });
  m.def("resize_map", [](const DoubleArray& a, int size) { return from_image(resize_map(to_map(a), size)); },
        py::arg("map"), py::arg("size"));

  // Loss
  m.def(
      "weighted_l1",
      [](const FloatArray& gt, const FloatArray& gen, const FloatArray& w, double alpha, const std::string& reduction) {
        return weighted_l1(to_image(gt), to_image(gen), to_image(w), loss_config(alpha, reduction));
      },
      py::arg("gt"), py::arg("gen"), py::arg("weights"), py::arg("alpha") = 0.1, py::arg("reduction") = "mean");
  m.def(
      "weighted_l1_grad",
      [](const FloatArray& gt, const FloatArray& gen, const FloatArray& w, double alpha, const std::string& reduction) {
        return from_image(weighted_l1_grad(to_image(gt), to_image(gen), to_image(w), loss_config(alpha, reduction)));
      },
      py::arg("gt"), py::arg("gen"), py::arg("weights"), py::arg("alpha") = 0.1, py::arg("reduction") = "mean");

  // Metrics
  m.def("l1", [](const FloatArray& a, const FloatArray& b) { return metric_l1(to_image(a), to_image(b)); });
  m.def("weighted_l1_metric", [](const FloatArray& a, const FloatArray& b, const FloatArray& w) {
    return metric_weighted_l1(to_image(a), to_image(b), to_image(w));
  });
  m.def("hausdorff", [](const FloatArray& a, const FloatArray& b) { return metric_hausdorff(to_image(a), to_image(b)); },
        "None when either image has no edges.");
  m.def("phd", [](const FloatArray& a, const FloatArray& b) { return metric_phd(to_image(a), to_image(b)); });
  m.def("iou", [](const FloatArray& a, const FloatArray& b) { return metric_iou(to_image(a), to_image(b)); });
  m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return metric_ssim(to_image(a), to_image(b)); });
  m.def(
      "hausdorff_points",
      [](const py::array_t<int, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& b, int h, int w) {
        return hausdorff_distance(to_pixels(a), to_pixels(b), h, w);
      },
      py::arg("a"), py::arg("b"), py::arg("height"), py::arg("width"));
  m.def(
      "phd_points",
      [](const py::array_t<int, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<int, py::array::c_style | py::array::forcecast>& b, int h, int w) {
        return phd_distance(to_pixels(a), to_pixels(b), h, w);
      },
      py::arg("a"), py::arg("b"), py::arg("height"), py::arg("width"));
  m.def("otsu_threshold", [](const FloatArray& a) {
    const auto r = otsu_threshold(to_image(a));
    py::dict d;
    d["bin"] = r.bin;
    d["threshold"] = r.threshold;
    d["between_variance"] = r.between_variance;
    d["degenerate"] = r.degenerate;
    return d;
  });
  m.def("pca", [](const std::vector<std::vector<float>>& features) {
    const auto r = pca_style_features(features);
    DoubleArray coords({static_cast<py::ssize_t>(r.coords.size()), py::ssize_t{2}});
    for (std::size_t i = 0; i < r.coords.size(); ++i) {
      coords.mutable_at(i, 0) = r.coords[i][0];
      coords.mutable_at(i, 1) = r.coords[i][1];
    }
    return py::make_tuple(coords, py::make_tuple(r.variance[0], r.variance[1]), r.degenerate);
  });

  // Corpus
  m.def(
      "render_glyph",
      [](const std::filesystem::path& font, const std::string& letter, int size, int margin) {
        if (letter.size() != 1) throw UnknownLetter("letter must be one character");
        return from_image(FontFace(font).render(letter[0], size, margin));
      },
      py::arg("font"), py::arg("letter"), py::arg("size") = 224, py::arg("margin") = 5,
      "Ink-black on white, glyph centred and scaled to fit size - 2*margin.");
  m.def("resize_image", [](const FloatArray& a, int size) { return from_image(resize_image(to_image(a), size)); });
  m.def("load_manifest", [](const std::filesystem::path& p) {
    const auto man = load_manifest(p);
    py::list records;
    for (const auto& r : man.records) records.append(record_dict(r));
    return records;
  });
  m.def(
      "sample_pairs",
      [](const std::filesystem::path& manifest, const std::string& split, std::size_t count, std::uint64_t seed) {
        const auto man = load_manifest(manifest);
        py::list out;
        for (const auto& p : sample_pairs(man, parse_split(split), count, seed)) {
          out.append(py::make_tuple(p.left.font_id, std::string(1, p.left.letter), p.right.font_id,
                                    std::string(1, p.right.letter), static_cast<int>(p.label)));
        }
        return out;
      },
      py::arg("manifest"), py::arg("split"), py::arg("count"), py::arg("seed"));
}
