"""Numeric defaults shared by more than one module.

These are declared configuration, not tuned values: the simulation contract
(collision radii, reach, camera geometry) is defined by this file plus the
asset catalog.
"""

AGENT_RADIUS = 0.25          # collision circle radius, metres
REACH = 1.5                  # max horizontal distance for targeting/interaction
EYE_HEIGHT = 1.5             # camera height above the feet
TARGET_CONE_DEG = 20.0       # half-angle of the targeting cone
PITCH_MIN = -60.0
PITCH_MAX = 60.0

CELL_SIZE = 0.25             # nav grid resolution
SNAP_RADIUS = 0.5            # endpoint snapping for pathfinding
USER_APPROACH = 1.0          # goto_user stops within this distance

WALL_THICKNESS = 0.1         # rendered thickness; collision uses the centerline
WALL_HEIGHT = 2.5
ROOM_INSET = WALL_THICKNESS / 2  # object placement keeps out of the wall slab

CONTACT_GAP = 1e-3           # movement stops this far short of contact (1 mm)
BODY_MIN_SEPARATION = 0.5    # agent/user centre distance floor (two radii)

HAND_FORWARD = 0.4           # held object offset from the agent's feet
HAND_HEIGHT = 1.1

MOVE_ROUND = 0.01            # action rounding: metres
ROTATE_ROUND = 1.0           # action rounding: degrees

VISIBILITY_RES = 64          # instance render size used by visible()
VISIBILITY_MAX_DIST = 10.0

PUT_GRID = 0.05              # spiral search resolution for put placement
STEP_CAP = 50                # policy-eval keyframe budget
