// stage tests added with the stages module
