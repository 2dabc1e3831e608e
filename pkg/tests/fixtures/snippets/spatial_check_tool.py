def check_existence_around_object_horizontally(image_patch: ImagePatch, object_name: str, reference_object_name: str, relative_horizontal_position: str, query: str) -> str:
    '''Check the existence of an object on either the left or right side of another object.
    
    Args:
        image_patch (ImagePatch): The image patch to check.
        object_name (str): The name of the object to check for existence.
        reference_object_name (str): The name of the reference object.
        relative_horizontal_position (str): The relative relative_horizontal_position position of the checked object to the reference object. Options: ["left", "right"].
        query (str): The original query to answer.
       
    Returns:
        str: "yes" if the object exists, "no" otherwise.
    '''
    
    assert relative_horizontal_position in ["left", "right"]
    reference_patches = image_patch.find(reference_object_name)
    if len(reference_patches) == 0:
        # If no reference object is found, query the image directly with simple_query instead of returning a long string like "There is no {reference_object_name}."
        return image_patch.simple_query(query)
    reference_patch = reference_patches[0]
    object_patches = image_patch.find(object_name)
    if len(object_patches) == 0:
        return "no"
    for object_patch in object_patches:
        if relative_horizontal_position == "left":
            flag = object_patch.horizontal_center < reference_patch.horizontal_center
        elif relative_horizontal_position == "right":
            flag = object_patch.horizontal_center > reference_patch.horizontal_center
        if flag:
            return "yes"
    return "no"
