import numpy as np
import pytest

from oitraster.scene import (
    Camera,
    Material,
    Scene,
    SceneError,
    is_degenerate_triangle,
    load_camera,
    load_obj,
    load_scene,
    ndc_to_pixel,
    perspective,
    project_to_ndc,
)


def write(path, text):
    path.write_text(text)
    return path


def test_single_triangle_becomes_lone_triangle_quad(tmp_path):
    scene = load_obj(write(tmp_path / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert scene.quad_count == 1
    q = scene.quads[0]
    assert q[3] == q[2]
    assert is_degenerate_triangle(scene.triangles()).tolist() == [False, True]


def test_quad_face(tmp_path):
    scene = load_obj(write(tmp_path / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
    assert scene.quads.tolist() == [[0, 1, 2, 3]]
    assert not is_degenerate_triangle(scene.triangles()).any()


def test_negative_and_slashed_indices(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/1 -2/2 -1/3\n"
    scene = load_obj(write(tmp_path / "n.obj", text))
    assert scene.quads[0, :3].tolist() == [0, 1, 2]


def test_out_of_range_index_names_line(tmp_path):
    with pytest.raises(SceneError, match=":4"):
        load_obj(write(tmp_path / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n"))


def test_face_arity_above_four(tmp_path):
    text = "".join(f"v {i} {i * i} 0\n" for i in range(5)) + "f 1 2 3 4 5\n"
    with pytest.raises(SceneError):
        load_obj(write(tmp_path / "p.obj", text))


def test_parse_failure_names_line(tmp_path):
    with pytest.raises(SceneError, match=":2"):
        load_obj(write(tmp_path / "x.obj", "v 0 0 0\nv 1 zz 0\n"))


def test_mtl_diffuse_and_dissolve(tmp_path):
    write(tmp_path / "m.mtl", "newmtl glass\nKd 0.2 0.4 0.6\nd 0.25\n")
    text = "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl glass\nf 1 2 3\n"
    scene, cam = load_scene(write(tmp_path / "s.obj", text))
    assert cam is None
    m = scene.materials[scene.quad_material[0]]
    assert m.base_color[:3] == pytest.approx((0.2, 0.4, 0.6))
    assert m.opacity == pytest.approx(0.25)


def test_camera_file_matrix(tmp_path):
    vp = " ".join(str(float(v)) for v in np.eye(4).ravel())
    cam = load_camera(write(tmp_path / "c.txt", f"width = 64\nheight = 32\nview_projection = {vp}\n"))
    assert (cam.width, cam.height) == (64, 32)
    assert np.array_equal(cam.view_projection, np.eye(4))


def test_camera_file_perspective_keys(tmp_path):
    text = "width 100\nheight 50\neye 0 0 5\ntarget 0 0 0\nfov 60\nnear 0.1\nfar 100\n"
    cam = load_camera(write(tmp_path / "c.txt", text))
    clip = project_to_ndc((0, 0, 0), cam)
    assert clip[3] == pytest.approx(5.0)
    assert clip[0] == pytest.approx(0.0) and clip[1] == pytest.approx(0.0)


def test_camera_missing_key(tmp_path):
    with pytest.raises(SceneError):
        load_camera(write(tmp_path / "c.txt", "width 10\n"))


def test_viewport_limits():
    Camera(np.eye(4), 2560, 2048)
    with pytest.raises(SceneError):
        Camera(np.eye(4), 2561, 10)
    with pytest.raises(SceneError):
        Camera(np.eye(4), 10, 0)


def test_identity_projection_examples():
    cam = Camera(np.eye(4), 64, 32)
    assert project_to_ndc((0, 0, 0), cam).tolist() == [0, 0, 0, 1]
    assert ndc_to_pixel(0.0, 0.0, cam) == (32.0, 16.0)
    # NDC (1, 1) is the right edge and the top edge of the viewport
    assert ndc_to_pixel(1.0, 1.0, cam) == (64.0, 0.0)
    # the last pixel center
    assert ndc_to_pixel(1 - 1 / 64, -1 + 1 / 32, cam) == (63.5, 31.5)


def test_perspective_w_is_minus_z():
    cam = Camera(perspective(60.0, 1.0, 0.5, 50.0), 8, 8)
    assert project_to_ndc((0.3, -0.2, -2.0), cam)[3] == pytest.approx(2.0)


def test_viewport_mapping_monotonic():
    cam = Camera(np.eye(4), 640, 480)
    xs = np.linspace(-1, 1, 101)
    px = [ndc_to_pixel(x, 0, cam)[0] for x in xs]
    py = [ndc_to_pixel(0, y, cam)[1] for y in xs]
    assert np.all(np.diff(px) > 0) and np.all(np.diff(py) < 0)


def test_triangles_enumeration():
    scene = Scene(np.zeros((5, 3)), [[0, 1, 2, 3], [1, 2, 4, 4]], [0, 0])
    tris = scene.triangles()
    assert len(tris) == 4
    assert tris.tolist() == [[0, 1, 2], [0, 2, 3], [1, 2, 4], [1, 4, 4]]


def test_scene_validation():
    with pytest.raises(SceneError):
        Scene(np.zeros((3, 3)), [[0, 1, 2, 3]], [0])
    with pytest.raises(SceneError):
        Scene(np.zeros((3, 3)), [[0, 1, 2, 2]], [1])
    with pytest.raises(SceneError):
        Scene(np.zeros((3, 3)), [[0, 1, 2, 2]], [0], colors=np.full((3, 4), 1.5))
    with pytest.raises(SceneError):
        Scene(np.zeros((3, 3)), [[0, 1, 2, 2]], [0], normals=np.full((3, 3), 0.9))
    with pytest.raises(SceneError):
        Material(opacity=1.2)
