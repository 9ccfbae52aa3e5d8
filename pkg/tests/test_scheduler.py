import threading
from http.server import HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthetic import blob_scene, orbit_cameras
from test_corrector import _StubCorrector

from gsdrag.corrector import CorrectorHandle
from gsdrag.deform import DragSpec
from gsdrag.errors import ContractError, HandleNotVisibleError
from gsdrag.mask import EditState
from gsdrag.render import rasterize_rgb
from gsdrag.scheduler import (
    AnnealSchedule,
    abort,
    anneal_strength,
    create_session,
    interval_targets,
    relocate_handles,
    run_interval,
    select_views,
    stop,
)


def _drag(target=(0.6, 0.3, 0.0)):
    return DragSpec(handles=[[0.0, 0.0, 0.0]], targets=[list(target)], radius=[0.5])


def _quick_session(tmp_path, scene, cams, intervals=2, corrector=None, **knobs):
    knobs.setdefault("steps_per_pass", 4)
    return create_session(
        scene,
        cams,
        _drag(),
        tmp_path / "out",
        intervals=intervals,
        anneal=AnnealSchedule(passes=2),
        corrector=corrector or CorrectorHandle(kind="identity"),
        view_count=3,
        **knobs,
    )


class TestAnneal:
    def test_paper_schedule_values(self):
        sched = AnnealSchedule(s_init=0.9, s_final=0.5, passes=4)
        got = [anneal_strength(sched, a) for a in (1, 2, 3, 4)]
        np.testing.assert_allclose(got, [0.9, 0.8, 0.7, 0.6], atol=1e-15)

    def test_first_pass_is_s_init(self):
        for sched in (AnnealSchedule(0.7, 0.3, 5), AnnealSchedule(1.0, 1.0, 2)):
            assert anneal_strength(sched, 1) == sched.s_init

    def test_single_pass(self):
        assert anneal_strength(AnnealSchedule(0.8, 0.4, 1), 1) == 0.8

    def test_inclusive_variant_reaches_s_final(self):
        sched = AnnealSchedule(0.9, 0.5, 4, inclusive=True)
        assert anneal_strength(sched, 4) == pytest.approx(0.5)
        assert anneal_strength(sched, 1) == pytest.approx(0.9)

    def test_out_of_range_pass(self):
        with pytest.raises(ContractError):
            anneal_strength(AnnealSchedule(), 0)


class TestIntervalTargets:
    def test_linear_steps(self):
        drag = DragSpec(handles=[[0, 0, 0]], targets=[[3, 0, 0]], radius=[1.0])
        for u, expected in ((1, [1, 0, 0]), (2, [2, 0, 0]), (3, [3, 0, 0])):
            np.testing.assert_allclose(interval_targets(drag, 3, u)[0], expected, atol=1e-15)

    def test_final_interval_is_exact(self):
        drag = DragSpec(handles=[[0.1, 0.2, 0.3]], targets=[[0.7, -0.4, 2.0]], radius=[1.0])
        np.testing.assert_array_equal(interval_targets(drag, 7, 7), drag.targets)

    def test_single_interval(self):
        drag = _drag()
        np.testing.assert_array_equal(interval_targets(drag, 1, 1), drag.targets)


class TestRelocation:
    def _state(self, handle_members):
        n = max(max(m) for m in handle_members if m) + 1
        handle_of = [[] for _ in range(n)]
        for h, members in enumerate(handle_members):
            for i in members:
                handle_of[i].append(h)
        return EditState(
            editable=np.ones(n, dtype=bool), handle_of=handle_of, generation=0
        )

    def test_mean_displacement(self):
        state = self._state([[0, 1]])
        before = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        after = before + np.array([[0.5, 0, 0], [1.5, 0, 0]])
        spec = _drag()
        out = relocate_handles(spec, state, before, after)
        np.testing.assert_allclose(out.handles[0], [1.0, 0, 0], atol=1e-12)
        np.testing.assert_array_equal(out.targets, spec.targets)

    def test_no_displacement_no_motion(self):
        state = self._state([[0, 1]])
        before = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        out = relocate_handles(_drag(), state, before, before.copy())
        np.testing.assert_array_equal(out.handles, _drag().handles)

    def test_untracked_handle_left_unmoved(self, caplog):
        state = EditState(editable=np.ones(1, dtype=bool), handle_of=[[]], generation=0)
        before = np.zeros((1, 3))
        with caplog.at_level("WARNING", logger="gsdrag"):
            out = relocate_handles(_drag(), state, before, before + 1)
        np.testing.assert_array_equal(out.handles, _drag().handles)
        assert any("tracks no gaussians" in r.message for r in caplog.records)


class TestSelectViews:
    def test_facing_camera_wins(self, rng):
        scene = blob_scene(rng)
        cams = orbit_cameras(4, size=48)
        from gsdrag.deform import assign_handles
        from gsdrag.mask import init_edit_state

        state = init_edit_state(scene, assign_handles(scene, _drag()))
        order = select_views(scene, state, cams, len(cams))
        assert len(order) == 4
        # the blob sits at the origin in front of cam00's side of the orbit;
        # a camera with zero visible area would sort last
        areas = {}
        from gsdrag.mask import render_view_mask

        for cam in cams:
            areas[cam.cam_id] = int(render_view_mask(scene, state, cam, dilate_px=0).bits.sum())
        assert areas[order[0]] == max(areas.values())

    def test_count_must_fit(self, rng):
        scene = blob_scene(rng)
        cams = orbit_cameras(2, size=32)
        from gsdrag.deform import assign_handles
        from gsdrag.mask import init_edit_state

        state = init_edit_state(scene, assign_handles(scene, _drag()))
        with pytest.raises(ContractError):
            select_views(scene, state, cams, 3)

    def test_invisible_handle_raises(self, rng):
        from synthetic import look_at_camera

        scene = blob_scene(rng)
        # both cameras look away from the scene; every splat is behind them
        cams = [
            look_at_camera([0, 0, 5], [0, 0, 10], size=32, cam_id="away0"),
            look_at_camera([0, 0, 6], [0, 0, 12], size=32, cam_id="away1"),
        ]
        from gsdrag.deform import assign_handles
        from gsdrag.mask import init_edit_state

        state = init_edit_state(scene, assign_handles(scene, _drag()))
        with pytest.raises(HandleNotVisibleError):
            select_views(scene, state, cams, 2)

    def test_default_count_is_fifty(self):
        import inspect

        sig = inspect.signature(select_views)
        assert sig.parameters["count"].default == 50


class TestRunInterval:
    def test_full_run_commits_and_snapshots(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=30, n_backdrop=80)
        cams = orbit_cameras(4, size=48)
        session, state = _quick_session(tmp_path, scene, cams, intervals=2)
        assert session.status == "idle"
        session, scene, state = run_interval(session, scene, state)
        assert session.status == "awaiting-user"
        assert session.current == 1
        session, scene, state = run_interval(session, scene, state)
        assert session.status == "committed"
        out = tmp_path / "out"
        for u in (1, 2):
            assert (out / f"interval_{u}" / "scene.ply").exists()
            assert (out / f"interval_{u}" / "state.json").exists()
            assert any((out / f"interval_{u}" / "renders").iterdir())
            assert any((out / f"interval_{u}" / "masks").iterdir())
        assert (out / "final" / "scene.ply").exists()
        assert (out / "loss_log.csv").exists()
        header = (out / "loss_log.csv").read_text().splitlines()[0]
        assert header == "interval,pass,view_id,total,l1,ssim,perc"

    def test_buffer_growth(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=20, n_backdrop=60)
        cams = orbit_cameras(4, size=40)
        session, state = _quick_session(tmp_path, scene, cams, intervals=2)
        v = len(session.views)
        assert len(session.buffer) == v
        session, scene, state = run_interval(session, scene, state)
        assert len(session.buffer) == v * 2
        session, scene, state = run_interval(session, scene, state)
        assert len(session.buffer) == v * 3

    def test_identity_corrector_is_near_fixed_point(self, tmp_path, rng):
        # identity correction makes the deformed render its own target, so a
        # T=1 rigid drag ends within optimization noise of that render.
        # A gentle fade (0.5) keeps the vacated region above the 2D mask
        # threshold; a harder fade drops it out of the mask and the
        # background term legitimately pulls those pixels elsewhere.
        from gsdrag.deform import (
            apply_copy_paste,
            assign_handles,
            handle_transforms,
            interpolate_deformation,
        )
        from gsdrag.mask import render_view_mask

        scene = blob_scene(rng, n_blob=25, n_backdrop=70)
        cams = orbit_cameras(4, size=48)
        drag = _drag()
        deformed_scene = scene.copy()
        a = assign_handles(deformed_scene, drag)
        ts = handle_transforms(drag)
        deformed = interpolate_deformation(deformed_scene, a, ts, drag)
        deformed_scene, _ = apply_copy_paste(deformed_scene, a, deformed, 0.5)

        session, state = _quick_session(
            tmp_path,
            scene,
            cams,
            intervals=1,
            steps_per_pass=8,
            split_per_interval=False,
            opacity_factor=0.5,
        )
        session, scene, state = run_interval(session, scene, state)
        assert session.status == "committed"
        vid = session.views[0]
        cam = session.cameras[vid]
        reference = rasterize_rgb(deformed_scene, cam, session.background).pixels
        final = rasterize_rgb(scene, cam, session.background).pixels
        mask = render_view_mask(scene, state, cam).bits
        inside = np.abs(final - reference)[mask].mean()
        assert inside <= 2.0 / 255.0

    def test_relocated_handle_tracks_interval_target(self, tmp_path, rng):
        # rigid single-handle drag with no optimization noise on geometry:
        # after one interval the handle lands on p_t'(1)
        scene = blob_scene(rng, n_blob=20, n_backdrop=50)
        cams = orbit_cameras(3, size=40)
        drag = _drag()
        expected = interval_targets(drag, 2, 1)[0]
        session, state = _quick_session(
            tmp_path, scene, cams, intervals=2, steps_per_pass=2, split_per_interval=False
        )
        session, scene, state = run_interval(session, scene, state)
        np.testing.assert_allclose(session.drag.handles[0], expected, atol=1e-6)

    def test_corrector_failure_rolls_back(self, tmp_path, rng):
        server = HTTPServer(("127.0.0.1", 0), _StubCorrector)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        endpoint = f"http://127.0.0.1:{server.server_port}"
        scene = blob_scene(rng, n_blob=15, n_backdrop=40)
        cams = orbit_cameras(3, size=32)
        session, state = _quick_session(
            tmp_path,
            scene,
            cams,
            intervals=2,
            corrector=CorrectorHandle(kind="external", endpoint=endpoint, timeout=2.0),
        )
        server.shutdown()  # corrector dies before the first interval
        n_before = len(scene)
        centers_before = scene.centers.copy()
        session, scene, state = run_interval(session, scene, state)
        assert session.status == "awaiting-user"
        assert session.current == 0
        assert session.last_error is not None
        assert len(scene) == n_before
        np.testing.assert_array_equal(scene.centers, centers_before)

    def test_step_from_terminal_status_rejected(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=15, n_backdrop=40)
        cams = orbit_cameras(3, size=32)
        session, state = _quick_session(tmp_path, scene, cams, intervals=1)
        session, scene, state = run_interval(session, scene, state)
        assert session.status == "committed"
        with pytest.raises(ContractError):
            run_interval(session, scene, state)


class TestStopAbort:
    def test_stop_freezes_at_current_interval(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=15, n_backdrop=40)
        cams = orbit_cameras(3, size=32)
        session, state = _quick_session(tmp_path, scene, cams, intervals=3)
        session, scene, state = run_interval(session, scene, state)
        stop(session, scene, state)
        assert session.status == "committed"
        out = tmp_path / "out"
        assert (
            (out / "final" / "scene.ply").read_bytes()
            == (out / "interval_1" / "scene.ply").read_bytes()
        )

    def test_stop_from_idle_rejected(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=15, n_backdrop=40)
        cams = orbit_cameras(3, size=32)
        session, state = _quick_session(tmp_path, scene, cams)
        with pytest.raises(ContractError):
            stop(session, scene, state)

    def test_abort(self, tmp_path, rng):
        scene = blob_scene(rng, n_blob=15, n_backdrop=40)
        cams = orbit_cameras(3, size=32)
        session, state = _quick_session(tmp_path, scene, cams)
        session, scene, state = run_interval(session, scene, state)
        abort(session)
        assert session.status == "aborted"
        with pytest.raises(ContractError):
            run_interval(session, scene, state)


@settings(max_examples=12, deadline=None)
@given(st.lists(st.sampled_from(["step", "stop", "abort"]), min_size=1, max_size=5))
def test_state_machine_transitions(tmp_path_factory, commands):
    """Random command sequences drive only the documented transitions; any
    other command raises and leaves the session untouched."""
    allowed = {
        "idle": {"step", "abort"},
        "awaiting-user": {"step", "stop", "abort"},
        "committed": set(),
        "aborted": set(),
    }
    rng = np.random.default_rng(0)
    scene = blob_scene(rng, n_blob=6, n_backdrop=10)
    cams = orbit_cameras(2, size=16)
    session, state = create_session(
        scene,
        cams,
        _drag(),
        tmp_path_factory.mktemp("sm"),
        intervals=2,
        anneal=AnnealSchedule(passes=1),
        corrector=CorrectorHandle(kind="identity"),
        view_count=1,
        steps_per_pass=1,
        split_per_interval=False,
        mask_dilate_px=0,
    )
    for cmd in commands:
        legal = cmd in allowed[session.status] and not (
            cmd == "step" and session.current >= session.intervals
        )
        before = session.status
        if legal:
            if cmd == "step":
                session, scene, state = run_interval(session, scene, state)
                assert session.status in ("awaiting-user", "committed")
            elif cmd == "stop":
                stop(session, scene, state)
                assert session.status == "committed"
            else:
                abort(session)
                assert session.status == "aborted"
        else:
            with pytest.raises(ContractError):
                if cmd == "step":
                    run_interval(session, scene, state)
                elif cmd == "stop":
                    stop(session, scene, state)
                else:
                    abort(session)
            assert session.status == before
