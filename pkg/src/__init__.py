# TSN desk toolkit - source root
