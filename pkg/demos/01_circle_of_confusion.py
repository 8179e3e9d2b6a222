# Circle of confusion with the thin-lens model.
#
# A 50 mm lens at f/1.4 with the combined pixel scale A = 800 (the calibrated
# capture rig). Shows the lens equation, the CoC for a few depths, and a
# defocus map for a tilted plane.
import numpy as np

from defocuskit import (
    DepthMap,
    FocusSetting,
    LensConfig,
    coc_pixels,
    defocus_map_from_depth,
    focus_depth_from_sensor,
    sensor_from_focus_depth,
)

lens = LensConfig.reference_rig()
print("lens:", lens.to_dict())

# Sensor 55.5 mm behind the lens brings which plane into focus?
D_f = focus_depth_from_sensor(55.5, lens.focal_length_mm)
print(f"sensor at 55.5 mm -> focus depth {D_f:.2f} mm")
print(f"and back: {sensor_from_focus_depth(D_f, lens.focal_length_mm):.6f} mm")

# The CoC is zero on the focus plane and grows on both sides; it tends to a
# finite limit for points at infinity.
setting = FocusSetting(500.0)
for D in (300.0, 450.0, 500.0, 600.0, 1000.0, 1e6):
    print(f"depth {D:>9.0f} mm  CoC {coc_pixels(D, setting, lens):8.3f} px")

# A plane tilting from 400 mm to 900 mm across the frame.
depth = DepthMap(np.tile(np.linspace(400.0, 900.0, 9), (3, 1)))
J = defocus_map_from_depth(depth, setting, lens)
np.set_printoptions(precision=2, suppress=True)
print("defocus along the tilt:", J.values[0])
