#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sumn/checkpoint.hpp"
#include "sumn/corpus.hpp"
#include "sumn/downstream.hpp"
#include "sumn/gradcheck.hpp"
#include "sumn/model.hpp"
#include "sumn/ops.hpp"
#include "sumn/reference.hpp"
#include "sumn/synth.hpp"
#include "sumn/trainer.hpp"

namespace py = pybind11;

namespace {

// Owning wrapper so python holds parameters and vocabulary together.
struct PyModel {
  sumn::ModelParams params;
  sumn::Vocabulary vocab;
};

sumn::Matrix matrix_from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) throw std::invalid_argument("matrix needs at least one row");
  sumn::Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw std::invalid_argument("ragged rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(static_cast<int>(r)));
  }
  return m;
}

std::vector<std::vector<float>> rows_from_matrix(const sumn::Matrix& m) {
  std::vector<std::vector<float>> rows(static_cast<size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) {
    rows[static_cast<size_t>(r)].assign(m.row(r), m.row(r) + m.cols);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SUMN core: self-supervised user representations from behavior logs";

  py::class_<sumn::Vocabulary>(m, "Vocabulary")
      .def_property_readonly("words",
                             [](const sumn::Vocabulary& v) { return v.words; })
      .def("__len__", &sumn::Vocabulary::size)
      .def("id_of", &sumn::Vocabulary::id_of, py::arg("word"));

  m.def("tokenize", &sumn::tokenize, py::arg("text"));
  m.def(
      "build_vocab",
      [](const std::vector<std::string>& texts, int max_size, int min_count) {
        return sumn::build_vocab(texts, max_size, min_count);
      },
      py::arg("texts"), py::arg("max_size"), py::arg("min_count") = 1);
  m.def("encode_behavior", &sumn::encode_behavior, py::arg("text"), py::arg("vocab"),
        py::arg("max_words") = 35);

  m.def("softmax", &sumn::softmax, py::arg("logits"));
  m.def(
      "target_distribution",
      [](const std::map<int, int>& counts, int vocab_size) {
        return sumn::target_distribution(counts, vocab_size);
      },
      py::arg("counts"), py::arg("vocab_size"));
  m.def("consistency_loss", &sumn::consistency_loss, py::arg("p"), py::arg("p_hat"));

  m.def("auc", &sumn::auc, py::arg("scores"), py::arg("labels"));
  m.def("accuracy", &sumn::accuracy, py::arg("predictions"), py::arg("labels"));
  m.def(
      "pca_project",
      [](const std::vector<std::vector<float>>& rows, int k) {
        sumn::PcaResult r = sumn::pca_project(matrix_from_rows(rows), k);
        return py::make_tuple(rows_from_matrix(r.projections),
                              rows_from_matrix(r.components), r.variances);
      },
      py::arg("x"), py::arg("k"));

  py::class_<PyModel>(m, "Model")
      .def_static(
          "load",
          [](const std::string& path) {
            sumn::Checkpoint c = sumn::load_checkpoint(path);
            return PyModel{std::move(c.params), std::move(c.vocab)};
          },
          py::arg("path"))
      .def_property_readonly("d", [](const PyModel& m_) { return m_.params.d; })
      .def_property_readonly("hops", [](const PyModel& m_) { return m_.params.hops; })
      .def_property_readonly("vocab", [](const PyModel& m_) { return m_.vocab; })
      .def(
          "infer",
          [](const PyModel& m_, const std::vector<std::vector<int>>& history,
             const std::string& variant) {
            return sumn::infer(history, m_.params, sumn::parse_variant(variant));
          },
          py::arg("history"), py::arg("variant") = "SUMN")
      .def(
          "save",
          [](const PyModel& m_, const std::string& path) {
            sumn::save_checkpoint(path, m_.params, m_.vocab);
          },
          py::arg("path"));

  m.def(
      "gradcheck",
      [](int d, int vocab, int hops, int behaviors, uint64_t seed, float h) {
        sumn::Rng rng(seed);
        sumn::ModelParams params = sumn::ModelParams::init(vocab, d, hops, rng);
        sumn::TrainingSample sample;
        sample.user_id = "gradcheck";
        for (int b = 0; b < behaviors; ++b) {
          std::vector<int> ids;
          const int n = 1 + static_cast<int>(rng.below(4));
          for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.below(vocab)));
          sample.history.push_back(std::move(ids));
        }
        for (int i = 0; i < 5; ++i) {
          sample.target_counts[static_cast<int>(rng.below(vocab))] += 1;
        }
        sumn::ModelParams grads = sumn::ModelParams::zeros_like(params);
        sumn::forward_backward(sample, params, grads);
        auto loss_fn = [&]() { return sumn::reference_loss(sample, params); };
        double max_err = 0.0;
        auto pt = params.tensors();
        auto gt = grads.tensors();
        for (size_t i = 0; i < pt.size(); ++i) {
          max_err = std::max(
              max_err, sumn::finite_diff_check(loss_fn, pt[i].second,
                                               std::span<const float>(gt[i].second), h,
                                               SIZE_MAX, 0, 1e-4));
        }
        return max_err;
      },
      py::arg("d") = 8, py::arg("vocab") = 50, py::arg("hops") = 2,
      py::arg("behaviors") = 3, py::arg("seed") = 0, py::arg("h") = 1e-3f);

  m.attr("__version__") = "0.1.0";
}
