import json

import numpy as np
import pytest

from vembeam.dataset import GenerationConfig, SamplingRanges, generate_dataset
from vembeam.element import MaterialParams
from vembeam.frame import build_portico, discretize
from vembeam.network import init_parameters
from vembeam.surrogate import NormalizationStats, SurrogateField, SurrogateModel, material_features
from vembeam.training import SobolevConfig, TrainingConfig, train


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    config = GenerationConfig(
        beam_length=2.0,
        elems_per_edge=2,
        order=4,
        beam_load=(-10e3,),
        ranges=SamplingRanges((100e9, 200e9), (2e-3, 6e-3), (2e-5, 8e-5)),
    )
    records, _, _ = generate_dataset(config, n_train=3, n_test=0, seed=31)
    training = TrainingConfig(
        epochs=15, node_hidden=(10, 8), material_hidden=(8, 6), head_hidden=(10,), seed=31
    )
    result = train(records, training, SobolevConfig(n_draws=3, seed=31))
    return result.model, config


class TestMaterialFeatures:
    def test_log_space_ordering(self):
        material = MaterialParams(2.0e11, 5e-5, 4e-3)
        features = material_features(material)
        assert features[0] == pytest.approx(np.log(2.0e11))
        assert features[1] == pytest.approx(np.log(4e-3))
        assert features[2] == pytest.approx(np.log(5e-5))


class TestArtifact:
    def test_save_load_round_trip(self, trained_model, tmp_path):
        model, _ = trained_model
        path = tmp_path / "model.json"
        model.save(path)
        loaded = SurrogateModel.load(path)
        points = np.array([[0.3, 1.1], [2.0, 2.0]])
        material = MaterialParams(1.5e11, 4e-5, 3e-3)
        assert np.array_equal(model.predict(points, material), loaded.predict(points, material))
        assert json.dumps(model.to_dict()) == json.dumps(loaded.to_dict())

    def test_unsupported_schema_rejected(self, trained_model):
        model, _ = trained_model
        payload = model.to_dict()
        payload["schema_version"] = 99
        with pytest.raises(ValueError, match="schema"):
            SurrogateModel.from_dict(payload)

    def test_weights_are_row_major_lists(self, trained_model):
        model, _ = trained_model
        block = model.to_dict()["architecture"]["node"]
        first = model.params.node_layers[0]
        assert block["layers"][0]["weight"] == first.weight.ravel().tolist()
        assert block["sizes"][0] == first.weight.shape[1]


class TestPrediction:
    def test_prediction_composes_normalization(self, trained_model):
        from vembeam.network import forward

        model, _ = trained_model
        points = np.array([[0.7, 1.9]])
        material = MaterialParams(1.2e11, 3e-5, 5e-3)
        node = model.stats.normalize_node(points)
        mat = model.stats.normalize_material(material_features(material))[None, :]
        expected = model.stats.denormalize_output(forward(model.params, node, mat))
        assert np.array_equal(model.predict(points, material), expected)

    def test_input_jacobian_matches_finite_differences(self, trained_model):
        model, _ = trained_model
        material = MaterialParams(1.3e11, 2.5e-5, 4e-3)
        points = np.array([[0.4, 1.5], [1.7, 2.0]])
        jacobian = model.input_jacobian(points, material)
        step = 1e-6
        for j in range(2):
            bump = np.zeros((1, 2))
            bump[0, j] = step
            numeric = (model.predict(points + bump, material) - model.predict(points - bump, material)) / (
                2.0 * step
            )
            assert np.allclose(jacobian[:, :, j], numeric, rtol=1e-6, atol=1e-9 * np.abs(numeric).max())


class TestSurrogateField:
    def test_derivative_matches_finite_differences_along_member(self, trained_model):
        model, config = trained_model
        material = MaterialParams(1.1e11, 3e-5, 2.5e-3)
        mesh = discretize(config.model(material))
        field = SurrogateField(model, mesh, material)
        for element_index in (0, len(mesh.elements) // 2, len(mesh.elements) - 1):
            elem = mesh.elements[element_index]
            x = np.array([0.3 * elem.length, 0.8 * elem.length])
            _, derivative = field.evaluate(element_index, x)
            step = 1e-6
            up, _ = field.evaluate(element_index, x + step)
            down, _ = field.evaluate(element_index, x - step)
            numeric = (up - down) / (2.0 * step)
            assert np.allclose(derivative, numeric, rtol=1e-5, atol=1e-12)

    def test_values_rotate_into_member_frame(self, trained_model):
        model, config = trained_model
        material = MaterialParams(1.1e11, 3e-5, 2.5e-3)
        mesh = discretize(config.model(material))
        # the left column points straight up, so axial = uy and transverse = -ux
        elem = mesh.elements[0]
        assert (elem.cos, elem.sin) == (0.0, 1.0)
        field = SurrogateField(model, mesh, material)
        x = np.array([0.5 * elem.length])
        values, _ = field.evaluate(0, x)
        origin = mesh.node_coords[elem.node_a]
        point = origin + x[0] * np.array([elem.cos, elem.sin])
        prediction = model.predict(point[None, :], material)[0]
        assert values[0, 0] == pytest.approx(prediction[1], rel=1e-12)
        assert values[0, 1] == pytest.approx(-prediction[0], rel=1e-12)
