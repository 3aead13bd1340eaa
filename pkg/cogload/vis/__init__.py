# plotting helpers shared by the report and the generator; matplotlib only.
